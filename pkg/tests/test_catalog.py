"""Catalog integrity: spans, unimodularity, file round trip."""

import pytest

from boxflow.catalog import builtin_catalog, dump_catalog, get_map, load_catalog
from boxflow.errors import CatalogError
from boxflow.flowlimit import compute_flow, normalize_exponents, rescale, twodim_flow
from boxflow.polyalg import GenPoly


def test_builtins_validate_and_span():
    cat = builtin_catalog()
    assert len(cat) >= 6
    assert {e.k for e in cat.values()} == {1, 2}
    assert {e.dim for e in cat.values()} == {2, 3}
    assert {e.product_type for e in cat.values()} == {True, False}
    for entry in cat.values():
        assert entry.matrix.determinant() == GenPoly.const(1)


def test_every_map_has_positive_critical_exponent():
    for entry in builtin_catalog().values():
        _, lam = normalize_exponents(entry.default_lambda)
        res = compute_flow(rescale(entry.matrix, lam, entry.map_vars))
        assert res.q > 0


def test_product_type_two_variable_maps_have_p_zero():
    # product structure keeps the derivative cocycle free of the second
    # variable, so the box exponent can be taken arbitrarily close to zero
    cat = builtin_catalog()
    checked = 0
    for entry in cat.values():
        if entry.k == 2 and entry.product_type:
            res = twodim_flow(entry.matrix, *entry.map_vars)
            assert res.p == 0
            assert res.b == 1
            checked += 1
    assert checked >= 2


def test_get_map_unknown():
    with pytest.raises(CatalogError):
        get_map("missing_map")


def test_file_round_trip(tmp_path):
    cat = builtin_catalog()
    path = tmp_path / "catalog.json"
    dump_catalog(str(path), cat)
    assert load_catalog(str(path)) == cat


def test_malformed_catalog(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(CatalogError):
        load_catalog(str(path))
    path.write_text('{"maps": [{"name": "x"}]}')
    with pytest.raises(CatalogError):
        load_catalog(str(path))
