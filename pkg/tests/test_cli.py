import json

import pytest

from wsnphm.cli import main


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seeds": 1, "t_max": 2, "workers": 1,
                                "topologies": ["centralized", "decentralized"]}))
    return path


def test_simulate(tmp_path, tiny_config, capsys):
    out = tmp_path / "res"
    assert main(["simulate", "--config", str(tiny_config), "--out", str(out)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed[0] == "topology,algorithm,first_death,whole_network_death,knee,terminal_error"
    assert len(printed) == 1 + 2 * 6
    assert (out / "raw.csv").exists() and (out / "error_decentralized.svg").exists()
    assert (out / "error_decentralized.png").exists()
    assert len((out / "raw.csv").read_text().splitlines()) == 2 * 6 * 3 + 1


def test_simulate_seed_override(tmp_path, tiny_config):
    out = tmp_path / "res"
    assert main(["simulate", "--config", str(tiny_config), "--seeds", "2", "--out", str(out)]) == 0
    assert len((out / "raw.csv").read_text().splitlines()) == 2 * 6 * 3 * 2 + 1


def test_unknown_key_is_an_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"seedz": 1}')
    assert main(["simulate", "--config", str(path)]) != 0
    assert "unknown config keys: seedz" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) != 0
    assert capsys.readouterr().err.startswith("error:")


def test_calibrate_failure_exit_code(tmp_path, capsys):
    code = main(["calibrate", "--targets", "10,20,40,60", "--bounds", "0,0", "--seeds", "1",
                 "--out", str(tmp_path / "f.json")])
    assert code == 1
    assert "FAILED" in capsys.readouterr().out
    assert not (tmp_path / "f.json").exists()


def test_calibrate_needs_four_targets(capsys):
    assert main(["calibrate", "--targets", "10,20"]) != 0
    assert "four" in capsys.readouterr().err


def test_topology_dump(tmp_path, capsys):
    code = main(["topology-dump", "--kind", "hierarchical", "--seed", "3", "--steps", "2",
                 "--out", str(tmp_path)])
    assert code == 0
    csv_lines = (tmp_path / "topology_hierarchical_seed3.csv").read_text().splitlines()
    assert csv_lines[0] == "node_id,x,y,role,next_hop,active"
    assert len(csv_lines) == 331
    snaps = (tmp_path / "topology_hierarchical_seed3_snapshots.csv").read_text().splitlines()
    assert len(snaps) == 2 * 300 + 1
    assert (tmp_path / "topology_hierarchical_seed3.svg").exists()


def test_bad_kind_rejected():
    with pytest.raises(SystemExit) as info:
        main(["topology-dump", "--kind", "mesh", "--seed", "0"])
    assert info.value.code != 0
