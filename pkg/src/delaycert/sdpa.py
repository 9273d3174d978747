"""Sparse SDPA text interchange ("dat-s") writer and parser.

The exported problem is the standard SDPA form

    min c' x   s.t.   X = sum_i x_i F_i - F_0,   X >= 0 (blockwise)

which matches our LMI orientation F0 + sum x_i Fi >= 0 through F_0^sdpa = -F0.
Diagonal blocks are written with negative block sizes per the format spec.
Round-tripping an exported file reproduces the matrices exactly (values are
printed with 17 significant digits).
"""

from __future__ import annotations

import io

import numpy as np
import scipy.sparse as sp

from .sdp import ConicProgram, smat, svec, svec_dim


def export_standard(prog: ConicProgram) -> bytes:
    """Serialize a ConicProgram (inequality part only) to SDPA dat-s bytes."""
    if prog.A is not None and prog.A.shape[0] > 0:
        raise ValueError("SDPA export does not carry equality constraints; "
                         "eliminate them before exporting")
    k = prog.num_vars
    blocks = prog.block_slices()
    out = io.StringIO()
    out.write('"exported by delaycert"\n')
    out.write(f"{k} = mDIM\n")
    out.write(f"{len(blocks)} = nBLOCK\n")
    out.write(", ".join(str(p if p > 1 else -1) for p, _ in blocks) + " = bLOCKsTRUCT\n")
    out.write(" ".join(f"{v:.17g}" for v in prog.c) + "\n")
    Gd = prog.G.tocsc()
    for bi, (p, sl) in enumerate(blocks, start=1):
        F0 = -smat(prog.h[sl], p)          # SDPA F0 = -our F0
        for i in range(p):
            for j in range(i, p):
                if F0[i, j] != 0.0:
                    out.write(f"0 {bi} {i + 1} {j + 1} {F0[i, j]:.17g}\n")
    Gcsr = prog.G.tocsr()
    for bi, (p, sl) in enumerate(blocks, start=1):
        sub = Gcsr[sl, :].tocsc()
        for var in range(k):
            col = sub[:, var]
            if col.nnz == 0:
                continue
            Fi = smat(-col.toarray().ravel(), p)   # our G rows are -svec(Fi)
            for i in range(p):
                for j in range(i, p):
                    if Fi[i, j] != 0.0:
                        out.write(f"{var + 1} {bi} {i + 1} {j + 1} {Fi[i, j]:.17g}\n")
    return out.getvalue().encode()


def parse_sdpa(data: bytes):
    """Parse dat-s bytes; returns (c, block_sizes, F0_list, Fi_list).

    ``Fi_list[i][b]`` is the dense F_i matrix of block b (SDPA orientation).
    """
    lines = data.decode().splitlines()
    pos = 0

    def next_content():
        nonlocal pos
        while pos < len(lines):
            ln = lines[pos].strip()
            pos += 1
            if ln and not ln.startswith(('"', "*")):
                return ln
        raise ValueError("unexpected end of SDPA file")

    def ints_of(line):
        return [int(t) for t in line.replace(",", " ").replace("=", " ").split()
                if t.lstrip("+-").isdigit()]

    m = ints_of(next_content())[0]
    nblock = ints_of(next_content())[0]
    struct_line = next_content().split("=")[0]
    sizes = [int(t) for t in struct_line.replace(",", " ").replace("(", " ")
             .replace(")", " ").replace("{", " ").replace("}", " ").split()]
    if len(sizes) != nblock:
        raise ValueError("block structure does not match nBLOCK")
    cvals: list[float] = []
    while len(cvals) < m:
        cvals.extend(float(t) for t in next_content()
                     .replace(",", " ").replace("{", " ").replace("}", " ").split())
    c = np.array(cvals[:m])
    dims = [abs(s) for s in sizes]
    diag = [s < 0 for s in sizes]
    F = [[np.zeros((d, d)) for d in dims] for _ in range(m + 1)]
    while pos < len(lines):
        ln = lines[pos].strip()
        pos += 1
        if not ln or ln.startswith(('"', "*")):
            continue
        parts = ln.replace(",", " ").split()
        matno, blk, i, j = int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])
        val = float(parts[4])
        tgt = F[matno][blk - 1]
        if diag[blk - 1] and i != j:
            raise ValueError("off-diagonal entry in a diagonal block")
        tgt[i - 1, j - 1] = val
        tgt[j - 1, i - 1] = val
    return c, dims, F[0], F[1:]


def import_program(data: bytes) -> ConicProgram:
    """Rebuild a ConicProgram from dat-s bytes (inverse of export_standard)."""
    c, dims, F0s, Fis = parse_sdpa(data)
    k = c.size
    hparts, Grows = [], []
    for b, p in enumerate(dims):
        hparts.append(svec(-F0s[b]))              # our F0 = -SDPA F0
        cols = np.stack([-svec(Fis[i][b]) for i in range(k)], axis=1) if k else \
            np.zeros((svec_dim(p), 0))
        Grows.append(sp.csc_matrix(cols))
    return ConicProgram(c=c, G=sp.vstack(Grows).tocsc() if Grows else sp.csc_matrix((0, k)),
                        h=np.concatenate(hparts) if hparts else np.zeros(0), dims=dims)


def solve_external(data: bytes, solver: str = "cvxopt"):
    """Solve an exported problem with an external backend; returns (status, obj).

    ``cvxopt`` runs in-process through an independent parser and solver; any
    other value is treated as an executable invoked as  <exe> in.dat-s out.
    """
    if solver == "cvxopt":
        from cvxopt import matrix, solvers
        c, dims, F0s, Fis = parse_sdpa(data)
        Gs, hs = [], []
        for b, p in enumerate(dims):
            Gs.append(matrix(np.stack([-Fis[i][b].flatten() for i in range(c.size)], axis=1)))
            hs.append(matrix(-F0s[b]))
        opts = {"show_progress": False, "abstol": 1e-9, "reltol": 1e-9, "feastol": 1e-9}
        sol = solvers.sdp(matrix(c), Gs=Gs, hs=hs, options=opts)
        obj = sol["primal objective"] if sol["status"] == "optimal" else None
        return sol["status"], obj
    import subprocess
    import tempfile
    from pathlib import Path
    with tempfile.TemporaryDirectory() as td:
        inp = Path(td) / "problem.dat-s"
        outp = Path(td) / "problem.out"
        inp.write_bytes(data)
        subprocess.run([solver, str(inp), str(outp)], check=True,
                       capture_output=True, timeout=600)
        text = outp.read_text()
    for line in text.splitlines():
        low = line.lower()
        if "objvalprimal" in low or "primal objective" in low:
            return "optimal", float(line.split("=")[-1].strip())
    raise ValueError("could not parse external solver output")
