"""Server side of the client/server validation parity contract.

The browser client ships its own transliteration of the setting parser;
``frontend/shared/validation-vectors.json`` pins the two to each other.
Every vector runs here against ``parse_setting_entry`` and in the
frontend suite against ``validateEntry``; the accept/reject decision
must agree with the vector's ``valid`` flag on both sides.
"""

import json
from pathlib import Path

import pytest

from dbsim.config import parse_setting_entry

_VECTOR_PATH = (
    Path(__file__).resolve().parent.parent
    / "frontend" / "shared" / "validation-vectors.json"
)
_DOC = json.loads(_VECTOR_PATH.read_text())
_ADDRESSABLE = set(_DOC["addressable"])


@pytest.mark.parametrize(
    "vector", _DOC["vectors"], ids=[v["name"] for v in _DOC["vectors"]]
)
def test_decision_matches_vector(vector):
    setting, _, bad = parse_setting_entry(vector["entry"], _ADDRESSABLE)
    accepted = setting is not None and not bad
    assert accepted == vector["valid"], (
        f"{vector['name']}: parser "
        f"{'accepted' if accepted else 'rejected'} but the shared vector "
        f"says valid={vector['valid']} (violations: {bad})"
    )


def test_rejections_carry_an_explanation():
    for vector in _DOC["vectors"]:
        if vector["valid"]:
            continue
        _, _, bad = parse_setting_entry(vector["entry"], _ADDRESSABLE)
        assert bad, f"{vector['name']}: rejected without a violation message"
