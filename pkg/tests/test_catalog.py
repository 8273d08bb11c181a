import numpy as np
import pytest

from absdelab import catalog
from absdelab.absde import solve_absde_grid
from absdelab.errors import ConfigError


@pytest.mark.parametrize("name", sorted(catalog.CATALOG))
def test_catalog_entries_build(name):
    spec = catalog.build_problem(name, n_steps=150)
    assert spec.grid.n_steps == 150
    exact = catalog.exact_solution(name)
    if exact is not None:
        exact_y, exact_z = exact
        assert np.isfinite(float(np.asarray(exact_y(0.5, 0.3))))
        assert np.isfinite(float(np.asarray(exact_z(0.5, 0.3))))


def test_unknown_catalog_id():
    with pytest.raises(ConfigError):
        catalog.build_problem("no-such-problem")


def test_resolve_rejects_garbage():
    with pytest.raises(ConfigError):
        catalog.resolve_problem("neither-id-nor-file")


EX43_CONFIG = """
[problem]
horizon = 1.0
anticipation = 0.5
steps = 300

[delay]
kind = constant
value = 0.5

[generator]
id = ex43
delta = 0.5

[terminal]
id = ex43
"""


def test_config_reproduces_catalog_problem(tmp_path):
    path = tmp_path / "ex43.cfg"
    path.write_text(EX43_CONFIG)
    from_config = catalog.load_problem(str(path))
    built = catalog.build_ex43(n_steps=300)
    assert from_config.grid == built.grid
    np.testing.assert_array_equal(from_config.delta.table, built.delta.table)
    s1 = solve_absde_grid(from_config, n_x=101)
    s2 = solve_absde_grid(built, n_x=101)
    np.testing.assert_array_equal(s1.y_values, s2.y_values)


def test_config_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text(EX43_CONFIG.replace("[problem]", "[problem]\ncolor = red"))
    with pytest.raises(ConfigError, match="color"):
        catalog.load_problem(str(path))


def test_config_unknown_section_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text(EX43_CONFIG + "\n[extras]\nfoo = 1\n")
    with pytest.raises(ConfigError, match="extras"):
        catalog.load_problem(str(path))


def test_config_wrong_generator_param_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text(EX43_CONFIG.replace("delta = 0.5", "a = 0.5"))
    with pytest.raises(ConfigError):
        catalog.load_problem(str(path))


def test_config_missing_required_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text(EX43_CONFIG.replace("horizon = 1.0", ""))
    with pytest.raises(ConfigError, match="horizon"):
        catalog.load_problem(str(path))


def test_config_linear_generator_with_anticipated_z(tmp_path):
    path = tmp_path / "lin.cfg"
    path.write_text(
        """
[problem]
horizon = 1.0
anticipation = 0.5
steps = 60

[delay]
kind = constant
value = 0.5

[generator]
id = linear
mu = 0.1
mu_bar = 0.2
sigma = 0.1
sigma_bar = 0.1
l = 0.05

[terminal]
id = poly
q0 = 0.5
q1 = 0.2
q2 = 0.1
p0 = 0.1
p1 = 0.0
"""
    )
    spec = catalog.load_problem(str(path))
    assert spec.gen.uses_anticipated_z
    surf = solve_absde_grid(spec, n_x=101)
    assert np.isfinite(surf.y0)


def test_resolve_with_steps_override(tmp_path):
    path = tmp_path / "ex43.cfg"
    path.write_text(EX43_CONFIG)
    spec = catalog.resolve_problem(str(path), n_steps=150)
    assert spec.grid.n_steps == 150
