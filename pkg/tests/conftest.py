import numpy as np
import pytest


ACCEPTANCE = []


def record_acceptance(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)


def random_complex_text(rng: np.random.Generator) -> str:
    """A random 2-complex over Z in the file format.

    Edges get random endpoints and offsets. Each face is glued along a closed
    walk with zero net offset, which makes the boundary of the boundary vanish.
    """
    nv = int(rng.integers(1, 5))
    ne = int(rng.integers(nv, nv + 5))
    lines = [f"cell 0 v{i} {rng.uniform(0.5, 2):.6f}" for i in range(nv)]
    edges = []
    for j in range(ne):
        a, b = (int(x) for x in rng.integers(0, nv, 2))
        off = int(rng.integers(-1, 2))
        edges.append((a, b, off))
        lines.append(f"cell 1 e{j} {rng.uniform(0.5, 2):.6f}")
        lines.append(f"bnd 1 e{j} v{a} -1 0")
        lines.append(f"bnd 1 e{j} v{b} 1 {off}")
    nf = int(rng.integers(0, 4))
    for f in range(nf):
        # triangle on an existing edge a->b plus two new edges b->c and a->c
        a, b, off1 = edges[int(rng.integers(0, len(edges)))]
        c, off2 = int(rng.integers(0, nv)), int(rng.integers(-1, 2))
        j2, j3 = len(edges), len(edges) + 1
        j1 = edges.index((a, b, off1))
        edges += [(b, c, off2), (a, c, off1 + off2)]
        for j, (x, y, off) in ((j2, edges[j2]), (j3, edges[j3])):
            lines.append(f"cell 1 e{j} {rng.uniform(0.5, 2):.6f}")
            lines.append(f"bnd 1 e{j} v{x} -1 0")
            lines.append(f"bnd 1 e{j} v{y} 1 {off}")
        p = int(rng.integers(-1, 2))
        lines.append(f"cell 2 f{f} {rng.uniform(0.5, 2):.6f}")
        lines.append(f"bnd 2 f{f} e{j1} 1 {p}")
        lines.append(f"bnd 2 f{f} e{j2} 1 {p + off1}")
        lines.append(f"bnd 2 f{f} e{j3} -1 {p}")
    return "\n".join(lines) + "\n"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
