"""End-to-end tests of the command-line front end.

Commands run in-process through main(); reports are parsed from captured
stdout or from --out files.  Every frozen number here was produced by the
library functions the commands wrap, so these tests pin the wiring, not
the mathematics.
"""

import json
import math

import pytest

from clsverify.cli import main
from clsverify.model import LabeledImage, load_network, save_dataset
from clsverify.risk import RiskParams, pfn
from clsverify.stats import (ProbabilityArray, coupon_expected_draws,
                             load_parray, save_parray)
from clsverify.classes import load_taumap
from clsverify.model import load_dataset

from fixture_defs import vec

pytestmark = pytest.mark.usefixtures("fixtures_dir")


@pytest.fixture()
def fx(fixtures_dir):
    return str(fixtures_dir)


def run(capsys, argv):
    rc = main(argv)
    return rc, capsys.readouterr()


def run_json(capsys, argv):
    rc, captured = run(capsys, argv)
    assert rc == 0, captured.err
    return json.loads(captured.out)


# ---------------------------------------------------------------------------
# usage and error channels


def test_no_subcommand_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_unknown_subcommand_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_missing_input_file_is_a_data_error(capsys, fx):
    rc, captured = run(capsys, ["eval", "--model", fx + "/no_such_net.json",
                                "--dataset", fx + "/probes.ndjson"])
    assert rc == 3
    assert captured.err.startswith("error:")


# ---------------------------------------------------------------------------
# eval


def test_eval_report_matches_library(capsys, fx, quadrant_net):
    doc = run_json(capsys, ["eval", "--model", fx + "/quadrant_net.json",
                            "--dataset", fx + "/probes.ndjson",
                            "--id", "p-far"])
    assert doc["id"] == "p-far"
    assert doc["model_digest"] == quadrant_net.digest
    assert doc["label"] == [1]
    assert doc["outcome"] == [1]
    assert doc["cluster"] == "TruePos[1]"
    assert math.fsum(doc["probs"]) == pytest.approx(1.0, abs=1e-12)
    assert doc["lambda"]["1"] == 0.0
    assert doc["lambda"]["2"] > 0.0


def test_eval_unknown_id_is_a_data_error(capsys, fx):
    rc, captured = run(capsys, ["eval", "--model", fx + "/quadrant_net.json",
                                "--dataset", fx + "/probes.ndjson",
                                "--id", "nope"])
    assert rc == 3
    assert "nope" in captured.err


# ---------------------------------------------------------------------------
# identify


def test_identify_report_and_outputs(capsys, fx, tmp_path, quadrant_net):
    tau_path = str(tmp_path / "tau.json")
    parray_path = str(tmp_path / "parray.json")
    doc = run_json(capsys, ["identify",
                            "--model", fx + "/quadrant_net.json",
                            "--dataset", fx + "/quadrant_train.ndjson",
                            "--out-tau", tau_path,
                            "--out-parray", parray_path])
    assert doc["num_images"] == 20
    assert doc["num_entries"] == 20
    assert doc["num_representatives"] == 2
    assert doc["num_clusters"] == 2
    assert doc["num_false_neg_classes"] == 0
    assert doc["num_false_pos_classes"] == 0
    assert doc["p_true_neg_cluster"] == 0.5
    assert doc["p_true_pos_cluster"] == 0.5
    assert doc["class_sizes"] == {"TrueNeg::q00": 10, "TruePos[1]::s00": 10}
    assert doc["domain_exits"] == []
    assert doc["parray"] == [["TrueNeg::q00", 0.5], ["TruePos[1]::s00", 0.5]]

    parray = load_parray(parray_path)
    assert parray.entries == (("TrueNeg::q00", 0.5), ("TruePos[1]::s00", 0.5))
    images = load_dataset(fx + "/quadrant_train.ndjson",
                          quadrant_net.input_shape)
    tau = load_taumap(tau_path, images)
    assert set(tau.representative_ids) == {"q00", "s00"}


def test_identify_runs_are_byte_identical(capsys, fx, tmp_path):
    argv = ["identify", "--model", fx + "/quadrant_net.json",
            "--dataset", fx + "/quadrant_train.ndjson"]
    paths = []
    for tag in ("a", "b"):
        out = str(tmp_path / f"report_{tag}.json")
        rc = main(argv + ["--out-tau", str(tmp_path / f"tau_{tag}.json"),
                          "--out-parray", str(tmp_path / f"p_{tag}.json"),
                          "--out", out])
        assert rc == 0
        paths.append(out)
    a, b = (open(p, "rb").read() for p in paths)
    assert a == b
    tau_a = open(str(tmp_path / "tau_a.json"), "rb").read()
    tau_b = open(str(tmp_path / "tau_b.json"), "rb").read()
    assert tau_a == tau_b


def test_out_file_equals_stdout(capsys, fx, tmp_path):
    argv = ["eval", "--model", fx + "/quadrant_net.json",
            "--dataset", fx + "/probes.ndjson"]
    doc_stdout = run_json(capsys, argv)
    out = tmp_path / "eval.json"
    rc = main(argv + ["--out", str(out)])
    assert rc == 0
    assert json.loads(out.read_text()) == doc_stdout


# ---------------------------------------------------------------------------
# verify, synthetic mode


@pytest.fixture()
def skewed_parray(tmp_path):
    # a small array with planned failure mass, for threshold tests
    p = ProbabilityArray(entries=(("TrueNeg::C0", 0.90),
                                  ("TruePos[1]::C1", 0.06),
                                  ("FalseNeg[1]::C2", 0.04)))
    path = str(tmp_path / "skewed.json")
    save_parray(p, path)
    return path


def test_verify_synthetic_report(capsys, skewed_parray):
    doc = run_json(capsys, ["verify", "--parray", skewed_parray,
                            "--sample-size", "200", "--seed", "11",
                            "--synthetic-draws", "2000"])
    assert doc["mode"] == "synthetic"
    assert doc["model_digest"] is None
    assert doc["seed"] == 11
    assert doc["num_outcomes"] == 2000
    assert doc["num_batches_complete"] == 10
    assert doc["new_classes"] == []
    assert len(doc["batches"]) == 10
    for b in doc["batches"]:
        assert b["q"] == 200
        assert b["complete"] is True
    assert doc["p_perp"]["w"] == 10
    # planned failure mass shows up as a nonzero rate estimate
    assert doc["p_perp"]["mean"] > 0.0
    assert doc["p_perp"]["ucl"] >= doc["p_perp"]["mean"]
    assert doc["p_perp_from_parray"] == pytest.approx(
        0.04 + doc["p_u_bound"], rel=1e-12)
    assert doc["p_avail_from_parray"] == 0.0


def test_verify_synthetic_is_deterministic(capsys, skewed_parray, tmp_path):
    argv = ["verify", "--parray", skewed_parray, "--sample-size", "200",
            "--seed", "11", "--synthetic-draws", "2000"]
    first = run_json(capsys, argv)
    out = tmp_path / "verify.json"
    rc = main(argv + ["--out", str(out)])
    assert rc == 0
    assert json.loads(out.read_text()) == first


def test_verify_ucl_threshold_exceeded_is_a_finding(capsys, skewed_parray):
    rc, captured = run(capsys, ["verify", "--parray", skewed_parray,
                                "--sample-size", "200", "--seed", "11",
                                "--synthetic-draws", "2000",
                                "--ucl-threshold", "0.001"])
    assert rc == 4
    doc = json.loads(captured.out)
    assert doc["p_perp"]["ucl"] > 0.001


def test_verify_needs_enough_outcomes_for_two_batches(capsys, skewed_parray):
    rc, captured = run(capsys, ["verify", "--parray", skewed_parray,
                                "--sample-size", "200", "--seed", "11",
                                "--synthetic-draws", "250"])
    assert rc == 3
    assert "complete batches" in captured.err


# ---------------------------------------------------------------------------
# verify, dataset mode


@pytest.fixture()
def identified(fx, tmp_path):
    tau_path = str(tmp_path / "tau.json")
    parray_path = str(tmp_path / "parray.json")
    rc = main(["identify", "--model", fx + "/quadrant_net.json",
               "--dataset", fx + "/quadrant_train.ndjson",
               "--out-tau", tau_path, "--out-parray", parray_path,
               "--out", str(tmp_path / "identify.json")])
    assert rc == 0
    return tau_path, parray_path


@pytest.fixture()
def verification_set(tmp_path):
    # fresh ids over known territory, plus one disconnected true positive
    # and one miss; the probes land at the end of the stream
    imgs = []
    for i in range(5):
        imgs.append(LabeledImage(id=f"vq{i}",
                                 pixels=vec(0.05 + 0.05 * i, 0.3 - 0.04 * i),
                                 label=frozenset()))
        imgs.append(LabeledImage(id=f"vs{i}",
                                 pixels=vec(0.06 + 0.04 * i, 0.58),
                                 label=frozenset({1})))
    imgs.append(LabeledImage(id="v-far", pixels=vec(0.9, 0.1),
                             label=frozenset({1})))
    imgs.append(LabeledImage(id="v-miss", pixels=vec(0.1, 0.1),
                             label=frozenset({1})))
    path = str(tmp_path / "verif.ndjson")
    save_dataset(imgs, path)
    return path


def test_verify_dataset_mode_extends_the_array(capsys, fx, identified,
                                               verification_set):
    tau_path, parray_path = identified
    doc = run_json(capsys, ["verify", "--parray", parray_path,
                            "--sample-size", "3", "--seed", "5",
                            "--model", fx + "/quadrant_net.json",
                            "--tau", tau_path,
                            "--tau-dataset", fx + "/quadrant_train.ndjson",
                            "--dataset", verification_set])
    assert doc["mode"] == "dataset"
    assert doc["num_outcomes"] == 12
    assert doc["new_classes"] == ["TruePos[1]::v-far", "FalseNeg[1]::v-miss"]
    # the last initial batch missed a planned class, so the batch size
    # doubled once
    assert doc["doublings"] == 1
    assert doc["final_sample_size"] == 6
    assert doc["num_batches_complete"] == 2
    final = dict((eid, p) for eid, p in doc["parray_final"])
    assert final["TruePos[1]::v-far"] == pytest.approx(1 / 12)
    assert final["FalseNeg[1]::v-miss"] == pytest.approx(1 / 12)
    assert final["TrueNeg::q00"] == pytest.approx(0.5 * 10 / 12)
    assert math.fsum(final.values()) == pytest.approx(1.0, abs=1e-12)
    assert doc["p_perp_from_parray"] == pytest.approx(
        1 / 12 + doc["p_u_bound"], rel=1e-12)


def test_verify_rejects_map_built_for_other_model(capsys, fx, identified,
                                                  verification_set):
    tau_path, parray_path = identified
    rc, captured = run(capsys, ["verify", "--parray", parray_path,
                                "--sample-size", "3", "--seed", "5",
                                "--model", fx + "/flagflip_net.json",
                                "--tau", tau_path,
                                "--tau-dataset",
                                fx + "/quadrant_train.ndjson",
                                "--dataset", verification_set])
    assert rc == 3
    assert "different model" in captured.err


def test_verify_dataset_mode_needs_all_inputs(capsys, identified):
    _, parray_path = identified
    rc, captured = run(capsys, ["verify", "--parray", parray_path,
                                "--sample-size", "3", "--seed", "5"])
    assert rc == 3
    assert "dataset mode needs" in captured.err


# ---------------------------------------------------------------------------
# plan


def test_plan_report(capsys, identified):
    _, parray_path = identified
    doc = run_json(capsys, ["plan", "--parray", parray_path,
                            "--e-max", "1e-3", "--p-hat", "0.04",
                            "--w-candidates", "5"])
    parray = load_parray(parray_path)
    assert doc["coupon_expected_draws"] == coupon_expected_draws(parray)
    assert doc["required_sample_size"] == 367702
    assert set(doc["t_multipliers"]) == {"5"}
    assert doc["t_multipliers"]["5"] == pytest.approx(7.173182219782202)
    assert doc["margin_per_unit_std"]["5"] == pytest.approx(
        7.173182219782202 / math.sqrt(5))


def test_plan_coverage_block(capsys, identified):
    _, parray_path = identified
    doc = run_json(capsys, ["plan", "--parray", parray_path,
                            "--sample-size", "40", "--num-samples", "3",
                            "--seed", "9"])
    cov = doc["coverage"]
    assert cov["num_samples"] == 3
    assert cov["seed"] == 9
    assert len(cov["zero_hits_per_sample"]) == 3
    assert cov["all_covered"] == all(
        not misses for misses in cov["zero_hits_per_sample"])


def test_plan_config_file_supplies_defaults(capsys, identified, tmp_path):
    _, parray_path = identified
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"e-max": 1e-3, "p-hat": 0.04}))
    doc = run_json(capsys, ["plan", "--parray", parray_path,
                            "--config", str(cfg)])
    assert doc["required_sample_size"] == 367702
    # explicit flags win over config entries
    doc2 = run_json(capsys, ["plan", "--parray", parray_path,
                             "--config", str(cfg), "--p-hat", "0.5"])
    assert doc2["p_hat"] == 0.5
    assert doc2["required_sample_size"] > doc["required_sample_size"]


# ---------------------------------------------------------------------------
# risk


def test_risk_report_matches_library(capsys):
    doc = run_json(capsys, ["risk", "--pn", "0.04", "--pc", "0.04"])
    value, breakdown = pfn(RiskParams(p_n=0.04, p_c=0.04))
    assert doc["pfn"] == value
    assert doc["hazard_rate_3oo3"] == (2.0 / 24.0) * value ** 3
    assert doc["breakdown"] == {label: p for label, p in breakdown}
    assert doc["params"]["env"] == {"1": 0.999, "2": 0.001}


def test_risk_threshold_exceeded_is_a_finding(capsys):
    rc, captured = run(capsys, ["risk", "--pn", "0.04", "--pc", "0.04",
                                "--thr", "1e-12"])
    assert rc == 4
    assert json.loads(captured.out)["exceeds_thr"] is True
    rc2, captured2 = run(capsys, ["risk", "--pn", "0.04", "--pc", "0.04",
                                  "--thr", "1e-6"])
    assert rc2 == 0
    assert json.loads(captured2.out)["exceeds_thr"] is False


def test_risk_sweep_writes_csv(capsys, tmp_path):
    csv_path = tmp_path / "sweep.csv"
    doc = run_json(capsys, ["risk", "--pn", "0.04", "--pc", "0.04",
                            "--sweep-csv", str(csv_path),
                            "--sweep-steps", "3"])
    assert doc["sweep_csv"] == str(csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "p_n,p_c,pfn"
    assert len(lines) == 1 + 9


# ---------------------------------------------------------------------------
# chi2


def test_chi2_inline_table(capsys):
    doc = run_json(capsys, ["chi2", "--table", "[[10,20],[20,10]]"])
    assert doc["df"] == 1
    assert doc["statistic"] == pytest.approx(20.0 / 3.0)
    assert doc["reject"] is True


def test_chi2_table_file(capsys, tmp_path):
    table = tmp_path / "table.json"
    table.write_text("[[10, 10], [10, 10]]")
    doc = run_json(capsys, ["chi2", "--table-file", str(table),
                            "--chi-alpha", "0.01"])
    assert doc["statistic"] == 0.0
    assert doc["reject"] is False


def test_chi2_needs_a_table(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["chi2"])
    assert exc.value.code == 2


def test_chi2_malformed_table_is_a_data_error(capsys):
    rc, captured = run(capsys, ["chi2", "--table", "[[10,"])
    assert rc == 3
    assert captured.err.startswith("error:")
