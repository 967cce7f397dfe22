"""BIER-TE software dataplane, table compiler, simulator and planning tools."""

from .core import BitString, BitStringError, Packet
from .sim import Scenario, load_scenario, load_scenario_file, oracle_deliveries, run
from .tables import TableSet, compile_tables, dump_tables
from .topology import Topology, TopologyError, load_topology, load_topology_file

__all__ = [
    "BitString",
    "BitStringError",
    "Packet",
    "Scenario",
    "TableSet",
    "Topology",
    "TopologyError",
    "compile_tables",
    "dump_tables",
    "load_scenario",
    "load_scenario_file",
    "load_topology",
    "load_topology_file",
    "oracle_deliveries",
    "run",
]

__version__ = "0.1.0"
