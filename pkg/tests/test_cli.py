import json

import pytest

from asynccache.cli import main
from asynccache.model import Instance

from conftest import three_user


@pytest.fixture
def inst_path(tmp_path):
    p = tmp_path / "ex1.json"
    three_user().save(p)
    return p


def test_gen_roundtrip(tmp_path):
    out = tmp_path / "g.json"
    assert main(["gen", "--K", "3", "--N", "3", "--M", "1", "--F", "4", "--gap", "2", "--out", str(out)]) == 0
    inst = Instance.load(out)
    assert inst.K == 3 and inst.config.F == 4
    out2 = tmp_path / "g2.json"
    main(["gen", "--K", "3", "--N", "3", "--M", "1", "--F", "4", "--gap", "2", "--out", str(out2)])
    assert out.read_bytes() == out2.read_bytes()


def test_gen_field_choice(tmp_path):
    out = tmp_path / "g.json"
    main(["gen", "--K", "2", "--N", "2", "--M", "1", "--F", "2", "--field", "65536", "--out", str(out)])
    assert Instance.load(out).config.field_order == 65536


def test_offline(inst_path, tmp_path, capsys):
    sched = tmp_path / "s.json"
    summ = tmp_path / "s.csv"
    assert main(["offline", str(inst_path), "--schedule", str(sched), "--summary", str(summ)]) == 0
    assert "objective=5.000000" in capsys.readouterr().out
    assert json.loads(sched.read_text())
    assert summ.read_text().count("\n") >= 2


def test_offline_dual(inst_path, capsys):
    assert main(["offline", str(inst_path), "--dual", "--iters", "300"]) == 0
    out = capsys.readouterr().out
    assert "objective=5.000000" in out and "source=" in out


def test_offline_infeasible(tmp_path, capsys):
    p = tmp_path / "bad.json"
    three_user(slack3=1).save(p)
    assert main(["offline", str(p)]) == 1
    assert "status=infeasible" in capsys.readouterr().out


def test_online(inst_path, tmp_path, capsys):
    log = tmp_path / "log.json"
    dec = tmp_path / "dec.csv"
    rc = main(["online", str(inst_path), "--eta0", "0", "--log", str(log), "--decode", str(dec)])
    out = capsys.readouterr().out
    assert rc == 0 and "status=satisfied" in out and "all_decoded=1" in out
    packets = json.loads(log.read_text())
    assert len(packets) >= 5
    assert dec.read_text().startswith("user")


def test_sim_is_deterministic(tmp_path):
    args = ["sim", "--K", "3", "--N", "3", "--M", "1", "--F", "3", "--trials", "2", "--gaps", "0.5,2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    ta = tmp_path / "ta.csv"
    assert main(args + ["--out", str(a), "--trials-out", str(ta)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 3
    assert len(ta.read_text().splitlines()) == 5


def test_trace(inst_path, tmp_path):
    out = tmp_path / "t.csv"
    assert main(["trace", str(inst_path), "--iters", "50", "--patience", "1000", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "iter,dual_value,primal_value,gap" and len(lines) == 51


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
