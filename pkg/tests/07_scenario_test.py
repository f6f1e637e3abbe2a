import os

from deepdiff import DeepDiff
from pytest import approx, mark, raises

from lab_home.distorder.exceptions import ScenarioError
from lab_home.distorder.laplace import DEFAULT_BROMWICH_NODES, DEFAULT_CONTOUR_NODES
from lab_home.distorder.scenario import SCHEMA, Scenario, parse_weight
from tests.helpers import write_scenario


def test_forward_scenario(scenarios_dir):
    scenario = Scenario.load(os.path.join(scenarios_dir, "forward_1d.ini"))
    expected = {
        "dimension": 1,
        "nodes": 63,
        "boundary": "dirichlet",
        "potential": 1.0,
        "potential_slope": 0.0,
        "mu": "linear:1,0.5",
        "g_profile": "bump",
        "g_center": None,
        "g_width": None,
        "g_amplitude": 1.0,
        "g_table": "",
        "g_weights": (),
        "observe_at": (0.5,),
    }
    diff = DeepDiff(expected, scenario["problem"])
    print(f"\n\nDifference between expected and parsed [problem]:\n{diff}")
    assert not diff
    assert scenario["numerics"]["time_steps"] == 200
    assert scenario["task"]["seed"] == 0
    experiment = scenario.experiment()
    assert experiment.observation_point == (0.5,)
    assert scenario.weight().values == approx([1.0, 1.5])
    assert scenario.referenced_files == []


def test_every_bundled_scenario_builds(scenarios_dir):
    names = sorted(n for n in os.listdir(scenarios_dir) if n.endswith(".ini"))
    assert len(names) == 7
    for name in names:
        scenario = Scenario.load(os.path.join(scenarios_dir, name))
        assert set(scenario.values) == set(SCHEMA)
        scenario.experiment()
        scenario.weight()
        scenario.weight("task", "mu_b")
        scenario.inversion_config()


def test_files_are_resolved_next_to_the_scenario(scenarios_dir):
    neumann = Scenario.load(os.path.join(scenarios_dir, "neumann_1d.ini"))
    assert neumann.g_table() == (0.0, 0.5, 1.0, 0.8, 0.3, 0.0)
    assert neumann.referenced_files == [
        os.path.join(scenarios_dir, "neumann_flux.txt")
    ]
    spectra = Scenario.load(os.path.join(scenarios_dir, "spectra_1d.ini"))
    assert spectra.weight().values == approx([1.0, 1.25, 1.5])
    assert spectra.referenced_files == [
        os.path.join(scenarios_dir, "weight_linear.txt")
    ]


def test_inversion_settings(scenarios_dir):
    scenario = Scenario.load(os.path.join(scenarios_dir, "invert_linear.ini"))
    config = scenario.inversion_config(jobs=2)
    assert (config.basis_node_count, config.tikhonov_weight) == (5, 1e-3)
    assert (config.max_iterations, config.jobs) == (20, 2)
    assert scenario["task"]["data_provenance"] == "timestep"
    assert scenario.data_path is None


def test_contour_defaults(tmp_path):
    scenario = Scenario.load(write_scenario(tmp_path, "[numerics]\ntime_steps = 50\n"))
    assert scenario.contour().nodes == DEFAULT_CONTOUR_NODES
    bromwich = write_scenario(tmp_path, "[numerics]\ncontour = bromwich\n", "b.ini")
    assert Scenario.load(bromwich).contour().nodes == DEFAULT_BROMWICH_NODES


@mark.parametrize(
    "text",
    [
        "[colour]\nred = 1\n",
        "[problem]\ncolour = red\n",
        "[problem]\nnodes = many\n",
        "[problem]\nboundary = robin\n",
        "[problem]\nnodes = 4\n",
        "[output]\nfield_format = xml\n",
        "[task]\ndata_provenance = guess\n",
        "[numerics]\nrefinement = 0\n",
        "[problem]\ng_table = 1,two\n",
        "[problem\nnodes = 5\n",
    ],
)
def test_invalid_scenarios(tmp_path, text):
    with raises(ScenarioError) as ae:
        scenario = Scenario.load(write_scenario(tmp_path, text))
        scenario.experiment()
    print(f"\n\nLoaded an invalid scenario, got the expected exception:\n<{ae.value}>")


def test_missing_files(tmp_path):
    with raises(ScenarioError) as ae:
        Scenario.load(str(tmp_path / "absent.ini"))
    print(f"\n\nLoaded a missing scenario, got the expected exception:\n<{ae.value}>")
    scenario = Scenario.load(write_scenario(tmp_path, "[task]\ndata = absent.csv\n"))
    with raises(ScenarioError):
        scenario.data_path
    scenario = Scenario.load(write_scenario(tmp_path, "[problem]\nmu = file:nope\n"))
    with raises(ScenarioError):
        scenario.weight()


@mark.parametrize(
    "text, fragment",
    [
        ("linear:1,-2", "node 1"),
        ("constant:0", "vanishes"),
        ("linear:1", "malformed"),
        ("spline:1,2", "not supported"),
    ],
)
def test_invalid_weights(text, fragment):
    with raises(ScenarioError) as ae:
        parse_weight(text)
    print(f"\n\nParsed weight '{text}', got the expected exception:\n<{ae.value}>")
    assert fragment in str(ae.value)


def test_weight_kinds():
    assert parse_weight("constant:2").values == approx([2.0, 2.0])
    assert parse_weight("hat:0.5,0.05").mass() == approx(1.0)
    cosine = parse_weight("cosine:0.5,0.6,2.0,0.2")
    assert cosine(0.5) == approx(2.2)
    assert cosine(0.0) == approx(0.2)


def test_check_and_inversion_defaults(tmp_path):
    scenario = Scenario.load(write_scenario(tmp_path, "[numerics]\ntime_steps = 50\n"))
    assert scenario["task"]["s_values"] == (1.0, 10.0, 100.0, 1000.0, 10000.0)
    config = scenario.inversion_config()
    assert (config.tikhonov_start, config.tikhonov_decay) == (1e-2, 0.3)
    assert config.tikhonov_weight == 1e-6
    assert config.max_iterations == 40
