"""Triangle-style ``.node`` / ``.ele`` / ``.edge`` files and SVG mesh drawings.

Indices in the files are 0-based.
"""
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .mesh import Mesh, _topological_boundary


def write_triangle(mesh, basename):
    """Write ``basename.node``, ``basename.ele`` and ``basename.edge``."""
    base = Path(basename)
    bmark = np.zeros(mesh.n_vertices, dtype=np.int64)
    bmark[mesh.boundary_vertex_mask] = 1
    with open(base.with_suffix(".node"), "w") as fh:
        fh.write(f"{mesh.n_vertices} 2 0 1\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i} {x:.17g} {y:.17g} {bmark[i]}\n")
    with open(base.with_suffix(".ele"), "w") as fh:
        fh.write(f"{mesh.n_elements} 3 1\n")
        for i, (t, r) in enumerate(zip(mesh.elements, mesh.ref_edge)):
            fh.write(f"{i} {t[0]} {t[1]} {t[2]} {r}\n")
    with open(base.with_suffix(".edge"), "w") as fh:
        fh.write(f"{len(mesh.boundary_edges)} 1\n")
        for i, (e, m) in enumerate(zip(mesh.boundary_edges, mesh.boundary_markers)):
            fh.write(f"{i} {e[0]} {e[1]} {m}\n")
    return base


def _rows(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                out.append(line.split())
    return out


def read_triangle(basename):
    """Read a mesh written by :func:`write_triangle` (or by Triangle with ``-z``).

    Without an ``.edge`` file the boundary is recovered from the topology and
    marked 0.  An element attribute column, if present, is taken as the
    refinement-edge index.
    """
    base = Path(basename)
    node = _rows(base.with_suffix(".node"))
    nv = int(node[0][0])
    vertices = np.array([[float(r[1]), float(r[2])] for r in node[1:nv + 1]])
    ele = _rows(base.with_suffix(".ele"))
    ne, npe = int(ele[0][0]), int(ele[0][1])
    nattr = int(ele[0][2]) if len(ele[0]) > 2 else 0
    if npe != 3:
        raise ValueError("only linear triangles are supported")
    elements = np.array([[int(v) for v in r[1:4]] for r in ele[1:ne + 1]])
    ref_edge = None
    if nattr:
        ref_edge = np.array([int(float(r[4])) for r in ele[1:ne + 1]])
    edge_path = base.with_suffix(".edge")
    if edge_path.exists():
        rows = _rows(edge_path)
        nb = int(rows[0][0])
        be = np.array([[int(r[1]), int(r[2])] for r in rows[1:nb + 1]], dtype=np.int64).reshape(-1, 2)
        markers = np.array([int(r[3]) if len(r) > 3 else 0 for r in rows[1:nb + 1]], dtype=np.int64)
    else:
        be = _topological_boundary(elements)
        markers = None
    return Mesh(vertices, elements, be, markers, ref_edge=ref_edge)


def _colour(t):
    # white -> dark red
    t = float(np.clip(t, 0.0, 1.0))
    r = 255
    g = int(round(255 * (1 - t)))
    b = int(round(255 * (1 - t) ** 2))
    if t > 0.5:
        r = int(round(255 * (1.5 - t)))
    return f"#{r:02x}{g:02x}{b:02x}"


def mesh_svg(mesh, values=None, size=600, stroke=0.5, title=None):
    """SVG drawing of the mesh; optional per-element fill scaled to ``values``."""
    v = mesh.vertices
    lo = v.min(axis=0)
    span = max(float(np.ptp(v[:, 0])), float(np.ptp(v[:, 1])), 1e-300)
    pad = 10
    scale = (size - 2 * pad) / span

    def xy(p):
        return pad + (p[0] - lo[0]) * scale, size - pad - (p[1] - lo[1]) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">']
    if title:
        parts.append(f"<title>{escape(title)}</title>")
    if values is not None:
        vals = np.asarray(values, dtype=float)
        vmax = vals.max() if vals.size and vals.max() > 0 else 1.0
        for tri, val in zip(mesh.elements, vals):
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in (xy(v[i]) for i in tri))
            parts.append(f'<polygon points="{pts}" fill="{_colour(val / vmax)}" stroke="none"/>')
    edges = mesh.edges
    segs = []
    for a, b in edges:
        (x0, y0), (x1, y1) = xy(v[a]), xy(v[b])
        segs.append(f"M{x0:.2f} {y0:.2f}L{x1:.2f} {y1:.2f}")
    parts.append(f'<path d="{"".join(segs)}" stroke="black" stroke-width="{stroke}" fill="none"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_mesh_svg(mesh, path, values=None, **kw):
    Path(path).write_text(mesh_svg(mesh, values, **kw))
