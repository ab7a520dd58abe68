"""Mining of frequent gate clusters in mapped netlists and their merger into
area-saving custom cells."""

from .library import AreaModel, CellLibrary, CellType, LibraryError, parse_library
from .netlist import BlifError, NetlistError, build_graph, flatten, parse_blif, partition
from .mining import MiningConfig, MiningResult, PatternGroup, mine
from .combine import PatternCombination, reward_approx, reward_area
from .emit import build_custom_cell, generate_spice, rewrite_netlist, expand_netlist

__version__ = "0.1.0"
