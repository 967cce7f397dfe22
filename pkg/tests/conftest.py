from pathlib import Path

import pytest

from bierte.topology import load_topology, load_topology_file

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


def four_cycle(frr="none", protection=None):
    """A-B-C-D-A with one bit per direction; A is the ingress, B, C, D are BFERs."""
    links = [
        ("A", "B", 1), ("B", "A", 2), ("B", "C", 3), ("C", "B", 4),
        ("C", "D", 5), ("D", "C", 6), ("D", "A", 7), ("A", "D", 8),
    ]
    doc = {
        "bsl": 16,
        "nodes": [
            {"id": "A", "roles": ["BFIR", "S-BFIR"]},
            {"id": "B", "roles": ["BFR", "BFER"]},
            {"id": "C", "roles": ["BFR", "BFER"]},
            {"id": "D", "roles": ["BFR", "BFER"]},
        ],
        "links": [{"from": a, "to": b, "bit": bit} for a, b, bit in links]
        + [{"from": n, "kind": "decap", "bit": bit} for n, bit in (("B", 9), ("C", 10), ("D", 11))],
        "subsets": [{"si": 0, "ingresses": ["A"], "frr": frr}],
        "groups": [{"id": "G", "receivers": ["B", "C"], "trees": {0: [1, 3, 9, 10]}}],
    }
    return load_topology(doc)


@pytest.fixture
def forwarding():
    return load_topology_file(FIXTURES / "forwarding.yaml")


@pytest.fixture
def two_subsets():
    return load_topology_file(FIXTURES / "two_subsets.yaml")


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record(n: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(ACCEPTANCE[n])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
