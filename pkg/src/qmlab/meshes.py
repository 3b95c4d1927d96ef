"""Hand-built triangulated surfaces with a known height Morse function.

The genus-g surface is assembled vertically from explicit pieces: apex
caps, cylinder bands, and pants pieces whose saddle level is a genuine
figure-eight in the mesh (two vertex loops sharing the saddle vertex).
Every non-critical vertex is PL-regular by construction, heights are
mirror-symmetric about 0, and the id order within constant-height circles
realizes the tie-break the sweep expects.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .reeb import MorseField, SurfaceMesh

TRUNK_RADIUS = 1.0
LOOP_RADIUS = 0.5
TUBE_RADIUS = 0.45


class _Builder:
    def __init__(self):
        self.verts: list[tuple[float, float, float]] = []
        self.tris: list[tuple[int, int, int]] = []

    def vertex(self, x, y, z) -> int:
        self.verts.append((float(x), float(y), float(z)))
        return len(self.verts) - 1

    def circle(self, cx, cy, radius, z, m, mirror=False) -> list[int]:
        ids = []
        for j in range(m):
            a = 2.0 * np.pi * j / m
            sy = -1.0 if mirror else 1.0
            ids.append(self.vertex(cx + radius * np.cos(a), cy + sy * radius * np.sin(a), z))
        return ids

    def tri(self, a, b, c):
        self.tris.append((a, b, c))

    def band(self, lo: list[int], up: list[int]):
        """Cylinder band between two rings/walks of equal length."""
        k = len(lo)
        if len(up) != k:
            raise ValidationError("band rings must have equal length")
        for i in range(k):
            j = (i + 1) % k
            self.tri(lo[i], lo[j], up[i])
            self.tri(lo[j], up[j], up[i])

    def mirror_band(self, lo: list[int], up: list[int]):
        """The z-mirror image of :meth:`band`: same boundary edge directions,
        mirrored interior combinatorics.  Using it for the merge pieces makes
        every triangle of the chain congruent to its mirror partner, so the
        pushforward measure is exactly symmetric about z = 0."""
        k = len(lo)
        if len(up) != k:
            raise ValidationError("band rings must have equal length")
        for i in range(k):
            j = (i + 1) % k
            self.tri(up[i], lo[i], up[j])
            self.tri(up[j], lo[i], lo[j])

    def bottom_cap(self, ring: list[int], apex: int):
        for i in range(len(ring)):
            j = (i + 1) % len(ring)
            self.tri(apex, ring[j], ring[i])

    def top_cap(self, ring: list[int], apex: int):
        for i in range(len(ring)):
            j = (i + 1) % len(ring)
            self.tri(apex, ring[i], ring[j])

    def figure_eight(self, z, m) -> tuple[int, list[int], list[int]]:
        """Two loops of m vertices each sharing the saddle vertex s at the origin."""
        s = self.vertex(0.0, 0.0, z)
        loop1 = [s]
        for j in range(1, m):
            a = 2.0 * np.pi * j / m
            loop1.append(self.vertex(-LOOP_RADIUS + LOOP_RADIUS * np.cos(a),
                                     LOOP_RADIUS * np.sin(a), z))
        loop2 = [s]
        for j in range(1, m):
            a = 2.0 * np.pi * j / m
            loop2.append(self.vertex(LOOP_RADIUS - LOOP_RADIUS * np.cos(a),
                                     -LOOP_RADIUS * np.sin(a), z))
        return s, loop1, loop2

    def add_split(self, b_ring: list[int], z_s, z_top, m) -> tuple[list[int], list[int]]:
        """Pants: one 2m-ring below splits into two m-rings above a saddle."""
        _, loop1, loop2 = self.figure_eight(z_s, m)
        self.band(b_ring, loop1 + loop2)
        t_ring = self.circle(-LOOP_RADIUS, 0.0, TUBE_RADIUS, z_top, m)
        u_ring = self.circle(LOOP_RADIUS, 0.0, TUBE_RADIUS, z_top, m, mirror=True)
        self.band(loop1, t_ring)
        self.band(loop2, u_ring)
        return t_ring, u_ring

    def add_merge(self, t_ring: list[int], u_ring: list[int], z_s, z_out, m) -> list[int]:
        """Inverted pants: two m-rings merge through a saddle into a 2m-ring."""
        _, loop1, loop2 = self.figure_eight(z_s, m)
        self.mirror_band(t_ring, loop1)
        self.mirror_band(u_ring, loop2)
        out = self.circle(0.0, 0.0, TRUNK_RADIUS, z_out, 2 * m)
        self.mirror_band(loop1 + loop2, out)
        return out

    def build(self) -> SurfaceMesh:
        return SurfaceMesh(np.array(self.verts), np.array(self.tris, dtype=int))


def sphere_mesh(m: int = 12) -> SurfaceMesh:
    """Two apexes over one equatorial ring: height has exactly 2 critical points."""
    b = _Builder()
    apex_lo = b.vertex(0.0, 0.0, -1.0)
    ring = b.circle(0.0, 0.0, 1.0, 0.0, m)
    apex_hi = b.vertex(0.0, 0.0, 1.0)
    b.bottom_cap(ring, apex_lo)
    b.top_cap(ring, apex_hi)
    return b.build()


def genus_chain_mesh(genus: int, m: int = 8) -> SurfaceMesh:
    """Vertical chain of ``genus`` handles; height is Morse with 2g+2 critical points.

    Saddle heights are the half-integers between -g and g (splits below
    merges in each handle), apexes sit at -(g+1) and g+1, and the whole
    construction is mirror-symmetric about z = 0.
    """
    if genus < 1:
        raise ValidationError("genus_chain_mesh needs genus >= 1 (use sphere_mesh)")
    if m < 3:
        raise ValidationError("m must be at least 3")
    b = _Builder()
    apex_lo = b.vertex(0.0, 0.0, -(genus + 1.0))
    ring = b.circle(0.0, 0.0, TRUNK_RADIUS, -float(genus), 2 * m)
    b.bottom_cap(ring, apex_lo)
    for k in range(genus):
        base = 2.0 * k - genus
        t_ring, u_ring = b.add_split(ring, base + 0.5, base + 1.0, m)
        ring = b.add_merge(t_ring, u_ring, base + 1.5, base + 2.0, m)
    apex_hi = b.vertex(0.0, 0.0, genus + 1.0)
    b.top_cap(ring, apex_hi)
    return b.build()


def torus_mesh(m: int = 8) -> SurfaceMesh:
    """A standing torus (the g=1 chain): height has a min, two saddles, a max."""
    return genus_chain_mesh(1, m)


def genus2_mesh(m: int = 8) -> SurfaceMesh:
    return genus_chain_mesh(2, m)


def genus3_mesh(m: int = 8) -> SurfaceMesh:
    return genus_chain_mesh(3, m)


def height_field(mesh: SurfaceMesh) -> MorseField:
    """The z coordinate as a Morse field (tie-broken by vertex id)."""
    return MorseField(mesh.vertices[:, 2].copy())
