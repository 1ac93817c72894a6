from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import fig6a  # noqa: E402

LINEITEM_CSV = (
    "ID,name,price,discount\n"
    "10,chair,100,0.1\n"
    "90,desk,1200,0.15\n"
    "57,lamp,40,0.0\n"
)

FIG2_SCRIPT = """LOAD 'lineitem.csv';
ADD COLUMN total;
UPDATE total = price * (1 - discount);
UPDATE total = 1020 WHERE ID = 90;
INSERT ROW ( name = 'table', price = 10,
             discount = 0.05, total = 9.5 );"""

PEOPLE_CSV = "A,B\nAlice,10\nBob,4\nCarol,8\nDave,9\n"


@pytest.fixture
def lineitem_fixtures() -> dict[str, str]:
    return {"lineitem.csv": LINEITEM_CSV}


@pytest.fixture
def people_fixtures() -> dict[str, str]:
    return {"people.csv": PEOPLE_CSV}


@pytest.fixture
def fig6a_state():
    return fig6a()


@pytest.fixture
def fig2_script_text() -> str:
    return FIG2_SCRIPT
