"""Primary acceptance criteria; each test prints one PASS/FAIL line."""
import json
import warnings

import pytest

from magcalderon.checks import CHECKS, run_check
from magcalderon.io import to_jsonable


@pytest.mark.parametrize("name", sorted(CHECKS))
def test_acceptance(name, capsys):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        r = run_check(name)
    with capsys.disabled():
        print(f"\n{r.line()}")
    json.dumps(to_jsonable(r.as_dict()))
    assert r.passed, json.dumps(to_jsonable({"metrics": r.metrics, "tolerance": r.tolerance}), indent=1)
