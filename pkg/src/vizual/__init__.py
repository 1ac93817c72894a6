"""vizual: a data curation engine where spreadsheet edits are statements.

Every grid gesture becomes a statement in a small imperative-flavored
declarative language; scripts replay deterministically over identified
cells, compile to SQL, and can be rewritten for readability and
generality. See README.md for the tour.
"""

from .engine import (
    StabilityMode,
    adapt,
    detect_cycles,
    dependencies,
    evaluate,
    rebase,
    recompute,
    region_resolve,
    validate_state,
)
from .executor import apply, apply_script, gesture_to_statements, load_csv
from .formula import parse_formula, render_formula
from .lang import Script, parse_script, parse_statement, render_script, script_hash
from .model import (
    Cell,
    CellId,
    ColId,
    CoordinateSystem,
    ErrorKind,
    ErrorValue,
    Region,
    RowId,
    SheetState,
    new_sheet,
)
from .rewriter import equivalence_check, fuse, generalize, reroll, suggest_rewrites
from .sqlcompile import compile_formula, compile_positional, compile_script

__version__ = "0.1.0"

__all__ = [
    "StabilityMode", "adapt", "detect_cycles", "dependencies", "evaluate",
    "rebase", "recompute", "region_resolve", "validate_state",
    "apply", "apply_script", "gesture_to_statements", "load_csv",
    "parse_formula", "render_formula",
    "Script", "parse_script", "parse_statement", "render_script", "script_hash",
    "Cell", "CellId", "ColId", "CoordinateSystem", "ErrorKind", "ErrorValue",
    "Region", "RowId", "SheetState", "new_sheet",
    "equivalence_check", "fuse", "generalize", "reroll", "suggest_rewrites",
    "compile_formula", "compile_positional", "compile_script",
    "__version__",
]
