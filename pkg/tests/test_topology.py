
import pytest
import yaml

from bierte.topology import (
    TopologyError,
    adjacent_bits,
    autoassign_bits,
    dump_topology,
    load_topology,
)

from conftest import FIXTURES


def _doc(name):
    return yaml.safe_load((FIXTURES / name).read_text())


def test_forwarding_example_has_eight_member_bits(forwarding):
    assert forwarding.member_bits(0) == list(range(1, 9))
    assert forwarding.bsl == 8


def test_forwarding_adjacent_bits(forwarding):
    assert adjacent_bits(forwarding, "BFR2", 0).binary() == "00101010"
    assert adjacent_bits(forwarding, "BFER1", 0).binary() == "01000000"
    assert adjacent_bits(forwarding, "BFR2", 7) == forwarding.zeros()


def test_shared_link_bit_is_owned_by_both_ends(forwarding):
    owners = sorted(a.src for a in forwarding.by_bit(0, 2))
    assert owners == ["BFR1", "BFR2"]


def test_trivial_domain():
    t = load_topology({"bsl": 8, "nodes": [{"id": "X", "roles": ["BFR"]}], "links": []})
    assert adjacent_bits(t, "X", 0) == t.zeros()


def test_duplicate_bit_rejected_with_location():
    doc = _doc("forwarding.yaml")
    doc["links"][2]["bit"] = 3
    doc["links"][3]["bit"] = 3
    with pytest.raises(TopologyError, match=r"links\[3\].*duplicate bit 3"):
        load_topology(doc)


def test_dangling_reference():
    doc = _doc("forwarding.yaml")
    doc["links"][0]["to"] = "NOPE"
    with pytest.raises(TopologyError, match="NOPE"):
        load_topology(doc)


def test_bit_above_bsl():
    doc = _doc("forwarding.yaml")
    doc["links"][0]["bit"] = 9
    with pytest.raises(TopologyError, match="links\\[0\\]"):
        load_topology(doc)


def test_bfer_needs_decap_bit():
    doc = _doc("forwarding.yaml")
    doc["links"] = [l for l in doc["links"] if l.get("kind") != "decap" or l["from"] != "BFER1"]
    with pytest.raises(TopologyError, match="BFER1"):
        load_topology(doc)


def test_unparseable_yaml():
    with pytest.raises(TopologyError, match="unparseable"):
        load_topology("links: [unclosed")


def test_duplicate_tunnel_label():
    doc = _doc("two_subsets.yaml")
    doc["tunnels"][1]["label"] = doc["tunnels"][0]["label"]
    with pytest.raises(TopologyError, match="label"):
        load_topology(doc)


def test_foreign_sbfir_cannot_be_transit():
    doc = _doc("two_subsets.yaml")
    # a routed link of SI 1 whose path crosses SB1, the ingress of SI 2
    doc.setdefault("underlay", []).extend([["RA1", "SB1"], ["SB1", "RA2"]])
    doc["links"].append({"from": "RA1", "to": "RA2", "si": 1, "bit": 16, "kind": "routed", "path": ["RA1", "SB1", "RA2"]})
    with pytest.raises(TopologyError, match="SB1"):
        load_topology(doc)


def test_protection_requires_second_ingress():
    doc = _doc("two_subsets.yaml")
    for s in doc["subsets"]:
        if s["si"] == 1:
            s["ingresses"] = ["SA1"]
    with pytest.raises(TopologyError):
        load_topology(doc)


def test_autoassign_fills_gaps():
    links = [{"from": "b", "to": "c", "bit": 2}, {"from": "a", "to": "b"}, {"from": "c", "to": "a"}]
    out = autoassign_bits(links)
    assert [l["bit"] for l in out] == [2, 1, 3]


@pytest.mark.parametrize("name", ["forwarding.yaml", "two_subsets.yaml"])
def test_dump_roundtrip(name):
    t = load_topology((FIXTURES / name).read_text())
    again = load_topology(dump_topology(t))
    assert again.adjacencies == t.adjacencies
    assert again.subsets == t.subsets
    assert again.tunnels == t.tunnels
    assert dump_topology(again) == dump_topology(t)
