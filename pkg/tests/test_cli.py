import json

import numpy as np

from hdts import io
from hdts.cli import DEFAULT_CONFIG, main
from hdts.gboot import simultaneous_ci
from hdts.longrun import plan_blocks, sigma_tilde
from hdts.model import Panel, ProcessSpec, simulate
from hdts.rng import RngContract


def write_config(path, extra=""):
    path.write_text(DEFAULT_CONFIG + extra)
    return str(path)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def test_binary_round_trip(tmp_path):
    gen = RngContract(1).derive("io").generator()
    arr = gen.standard_normal((17, 4))
    path = tmp_path / "x.bin"
    io.write_array_binary(path, arr)
    assert np.array_equal(io.read_array_binary(path), arr)
    with open(path, "rb") as f:
        assert f.read(5) == b"HDTS1"


def test_panel_csv_round_trip(tmp_path):
    gen = RngContract(2).derive("io").generator()
    arr = gen.standard_normal((9, 3)) * 1e-7
    path = tmp_path / "x.csv"
    io.write_panel_csv(path, arr)
    assert path.read_text().splitlines()[0] == "t,x1,x2,x3"
    assert np.array_equal(io.read_panel_csv(path), arr)  # %.17g round-trips


def test_matrix_csv_round_trip(tmp_path):
    arr = np.array([[1.0, -2.5], [3.0, 4.125]])
    path = tmp_path / "m.csv"
    io.write_matrix_csv(path, arr)
    assert np.array_equal(io.read_matrix_csv(path), arr)


# ---------------------------------------------------------------------------
# CLI behaviour
# ---------------------------------------------------------------------------

def test_print_defaults(capsys):
    assert main(["--print-defaults"]) == 0
    out = capsys.readouterr().out
    assert "[process]" in out and "family = linear" in out


def test_simulate_matches_library_bit_exactly(tmp_path):
    cfg = write_config(tmp_path / "cfg.ini")
    out = tmp_path / "runs" / "panel"
    assert main(["--seed", "9", "simulate", "--config", cfg,
                 "--out", str(out)]) == 0
    spec = ProcessSpec("linear", p=5, alpha=1.0, K=200, h=0, rho=0.0)
    want = simulate(spec, 1000, RngContract(9)).data
    assert np.array_equal(io.read_array_binary(out.with_suffix(".bin")), want)
    assert np.array_equal(io.read_panel_csv(out.with_suffix(".csv")), want)
    manifest = json.loads((out.parent / "panel.manifest.json").read_text())
    assert set(manifest["outputs"]) == {"panel.csv", "panel.bin"}


def test_simulate_rerun_reproduces_digests(tmp_path):
    cfg = write_config(tmp_path / "cfg.ini")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name / "panel"
        assert main(["--seed", "4", "simulate", "--config", cfg,
                     "--out", str(out)]) == 0
        man = json.loads((out.parent / "panel.manifest.json").read_text())
        outs.append(man["outputs"])
    assert outs[0] == outs[1]


def test_estimate_and_ci_match_library(tmp_path):
    cfg = write_config(tmp_path / "cfg.ini")
    out = tmp_path / "panel"
    main(["--seed", "3", "simulate", "--config", cfg, "--out", str(out)])
    assert main(["estimate", "--panel", str(out.with_suffix(".bin")),
                 "--M", "8", "--out", str(tmp_path / "est")]) == 0
    data = io.read_array_binary(out.with_suffix(".bin"))
    want = sigma_tilde(Panel.from_data(data), plan_blocks(1000, 8)).sigma
    got = io.read_array_binary(tmp_path / "est.sigma.bin")
    assert np.array_equal(got, want)

    assert main(["--seed", "11", "ci", "--panel", str(out.with_suffix(".csv")),
                 "--theta", "0.9", "--B", "2000",
                 "--out", str(tmp_path / "ci")]) == 0
    side = json.loads((tmp_path / "ci.ci.json").read_text())
    rep = simultaneous_ci(Panel.from_data(data), 0.9, None, 2000, RngContract(11))
    assert side["chi"] == rep.chi
    rows = (tmp_path / "ci.ci.csv").read_text().splitlines()
    assert rows[0] == "j,mu_hat,lo,hi,sigma_tilde_jj"
    first = rows[1].split(",")
    assert float(first[1]) == rep.mu_hat[0]


def test_covtest_cli(tmp_path):
    cfg = write_config(tmp_path / "cfg.ini")
    out = tmp_path / "panel"
    main(["--seed", "3", "simulate", "--config", cfg, "--out", str(out)])
    assert main(["--seed", "2", "covtest", "--panel", str(out.with_suffix(".bin")),
                 "--out", str(tmp_path / "ct")]) == 0
    lines = (tmp_path / "ct.covtest.csv").read_text().splitlines()
    assert lines[0] == "j,k,gamma_hat,stat,threshold,flag"
    assert len(lines) == 1 + 15


def test_validation_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(DEFAULT_CONFIG.replace("theta1 = 0.3", "theta1 = 1.5")
                   .replace("family = linear", "family = threshold-ar"))
    rc = main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")])
    err = capsys.readouterr().err
    assert rc == 2
    body = json.loads(err)
    assert body["type"] == "validation" and "theta1" in body["error"]

    rc = main(["ci", "--panel", str(tmp_path / "missing.csv")])
    assert rc == 2

    cfg = write_config(tmp_path / "cfg.ini")
    out = tmp_path / "panel"
    main(["--seed", "3", "simulate", "--config", cfg, "--out", str(out)])
    rc = main(["estimate", "--panel", str(out.with_suffix(".bin")), "--M", "5000"])
    assert rc == 2
    rc = main(["ci", "--panel", str(out.with_suffix(".bin")), "--theta", "1.5"])
    assert rc == 2


def test_numerical_exit_code(tmp_path, capsys):
    bad = tmp_path / "nan.csv"
    bad.write_text("t,x1\n1,nan\n2,1.0\n")
    rc = main(["estimate", "--panel", str(bad)])
    assert rc == 3
    assert json.loads(capsys.readouterr().err)["type"] == "numerical"


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text(DEFAULT_CONFIG.replace("n_perm = 0", "n_perm = 0\nn_gird = 5"))
    rc = main(["experiment", "--config", str(cfg),
               "--out-dir", str(tmp_path / "d")])
    assert rc == 2
    assert "n_gird" in json.loads(capsys.readouterr().err)["error"]


def test_experiment_cli_reproducible_across_threads(tmp_path):
    body = DEFAULT_CONFIG.replace("family = linear", "family = iid") \
                         .replace("kind = coverage", "kind = ga") \
                         .replace("R = 200", "R = 150") \
                         .replace("n = 500", "n = 100") \
                         .replace("p = 20", "p = 4")
    cfg = tmp_path / "exp.ini"
    cfg.write_text(body)
    texts = []
    for threads, name in (("1", "d1"), ("8", "d8")):
        assert main(["--seed", "21", "--threads", threads, "experiment",
                     "--config", str(cfg), "--out-dir",
                     str(tmp_path / name)]) == 0
        texts.append((tmp_path / name / "report.csv").read_bytes())
    assert texts[0] == texts[1]


def test_experiment_unknown_kind(tmp_path, capsys):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text(DEFAULT_CONFIG.replace("kind = coverage", "kind = frobnicate"))
    rc = main(["experiment", "--config", str(cfg),
               "--out-dir", str(tmp_path / "d")])
    assert rc == 2
    assert "frobnicate" in json.loads(capsys.readouterr().err)["error"]


def test_check_conditions_cli(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.ini")
    rc = main(["check-conditions", "--config", cfg, "--q", "8", "--alpha", "1.5",
               "--n", "4096", "--out", str(tmp_path / "report.json")])
    assert rc == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["regime"] == "weaker"
    assert {"L1", "L2", "W1", "W2", "N1", "N2"} <= set(rep)
    # boundary alpha errors out
    rc = main(["check-conditions", "--config", cfg, "--q", "8",
               "--alpha", str(0.5 - 1.0 / 8.0), "--n", "4096"])
    assert rc == 2
    capsys.readouterr()
    # sub-exponential without nu errors out
    rc = main(["check-conditions", "--config", cfg, "--n", "4096",
               "--sub-exponential"])
    assert rc == 2


def test_spec_config_round_trip(tmp_path):
    from hdts.cli import build_spec, spec_to_config_text, _load_config
    from hdts.model import InnovationLaw
    specs = [
        ProcessSpec("linear", p=7, alpha=1.5, K=33, h=2, rho=0.4),
        ProcessSpec("threshold-ar", p=2, theta1=-0.4, theta2=0.7, burn_in=64),
        ProcessSpec("iid", p=3,
                    innovation=InnovationLaw.symmetric_pareto(4.5, body="shell")),
        ProcessSpec("iid", p=3, innovation=InnovationLaw.student_t(6.5)),
    ]
    for i, spec in enumerate(specs):
        path = tmp_path / f"s{i}.ini"
        path.write_text(spec_to_config_text(spec, n=12))
        assert build_spec(_load_config(path)) == spec


def test_minimal_iid_config_and_zero_panel(tmp_path):
    cfg = tmp_path / "iid.ini"
    cfg.write_text("[process]\nfamily = iid\np = 3\n\n[simulate]\nn = 6\n")
    out = tmp_path / "panel"
    assert main(["--seed", "1", "simulate", "--config", str(cfg),
                 "--out", str(out)]) == 0
    lines = out.with_suffix(".csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2,x3" and len(lines) == 7

    zero = tmp_path / "zero.csv"
    io.write_panel_csv(zero, np.zeros((12, 2)))
    assert main(["estimate", "--panel", str(zero),
                 "--out", str(tmp_path / "zest")]) == 0
    got = io.read_array_binary(tmp_path / "zest.sigma.bin")
    assert np.all(got == 0.0)


def test_experiment_smoke_config_under_60s(tmp_path):
    import time
    body = DEFAULT_CONFIG.replace("family = linear", "family = iid") \
                         .replace("n = 500", "n = 200") \
                         .replace("p = 20", "p = 8")
    cfg = tmp_path / "smoke.ini"
    cfg.write_text(body)
    t0 = time.perf_counter()
    assert main(["--seed", "3", "experiment", "--config", str(cfg),
                 "--out-dir", str(tmp_path / "out")]) == 0
    assert time.perf_counter() - t0 < 60.0
    lines = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert len(lines) == 2  # one cell
    meta = json.loads((tmp_path / "out" / "report.meta.json").read_text())
    assert len(meta["cell_runtimes_sec"]) == 1


def test_counterexample_cli_with_ecdf_dump(tmp_path):
    body = DEFAULT_CONFIG.replace("kind = coverage", "kind = counterexample") \
                         .replace("R = 200", "R = 120") \
                         .replace("n = 500", "n = 32") \
                         .replace("p_grid = 64,512,4096", "p_grid = 8,32")
    cfg = tmp_path / "ce.ini"
    cfg.write_text(body)
    assert main(["--seed", "5", "experiment", "--config", str(cfg),
                 "--out-dir", str(tmp_path / "out"), "--dump-ecdf"]) == 0
    report = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert report[0].startswith("p,n,R,tail_index,body,ks")
    assert (tmp_path / "out" / "ctrex_p8.ecdf.csv").exists()
    ecdf = (tmp_path / "out" / "ctrex_p8.ecdf.csv").read_text().splitlines()
    assert ecdf[0] == "u,ecdf_sample,ecdf_gauss"


def test_check_conditions_profile_round_trip(tmp_path):
    from hdts.depmeasure import closed_form_profile
    prof = closed_form_profile(ProcessSpec("linear", p=4, alpha=1.5, K=30),
                               8.0, 1.5)
    io.write_json(tmp_path / "prof.json", prof.to_json_dict())
    rc = main(["check-conditions", "--profile", str(tmp_path / "prof.json"),
               "--n", "2048", "--out", str(tmp_path / "rep.json")])
    assert rc == 0
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["p"] == 4.0 and rep["q"] == 8.0
