"""Global numbering of the VEM degrees of freedom."""
from __future__ import annotations

import numpy as np

from .mesh import PolyMesh


def n_moments(m: int) -> int:
    """Number of interior moments, ``dim P_{m-2}``."""
    return (m - 1) * m // 2


def local_dof_count(n_vertices: int, m: int) -> int:
    return n_vertices * m + n_moments(m)


class GlobalDofMap:
    """Vertex dofs first, then edge-interior dofs, then cell moments.

    Edge ``e`` owns the block ``N_V + e(m-1) + [0, m-1)``, ordered along the
    stored edge orientation. A cell that traverses the edge backwards sees the
    block reversed. Cell ``c`` owns ``N_V + N_E(m-1) + c n_mom + [0, n_mom)``.

    Attributes:
        n_dofs: total number of global dofs.
        cell_dofs: list of per-cell global index arrays in local dof order.
    """

    def __init__(self, mesh: PolyMesh, m: int):
        if m < 1:
            raise ValueError(f"order must be >= 1, got {m}")
        self.m = m
        self.n_vertex = mesh.n_vertices
        self.n_edge_dofs = mesh.n_edges * (m - 1)
        self.n_mom = n_moments(m)
        self.edge_offset = self.n_vertex
        self.cell_offset = self.n_vertex + self.n_edge_dofs
        self.n_dofs = self.cell_offset + mesh.n_cells * self.n_mom
        inner = np.arange(m - 1)
        self.cell_dofs = []
        for c, cell in enumerate(mesh.cells):
            edges = mesh.cell_edges[c]
            flips = mesh.cell_edge_flip[c]
            blocks = self.edge_offset + edges[:, None] * (m - 1) + np.where(
                flips[:, None], inner[::-1][None, :], inner[None, :]
            )
            mom = self.cell_offset + c * self.n_mom + np.arange(self.n_mom)
            self.cell_dofs.append(np.concatenate([cell, blocks.ravel(), mom]).astype(np.intp))

    def edge_dofs(self, e: int) -> np.ndarray:
        """Global indices of the interior dofs of edge ``e`` in stored orientation."""
        start = self.edge_offset + e * (self.m - 1)
        return np.arange(start, start + self.m - 1)

    def __len__(self) -> int:
        return self.n_dofs
