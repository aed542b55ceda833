"""Command-line front end.

Subcommands:

* eval      forward pass and activation distances of one image
* identify  build the representative map and initial probability array
* verify    run a batched verification campaign (dataset or synthetic)
* plan      sample sizing: margins, coupon expectation, coverage dry run
* risk      voted-detector false-negative probability and hazard rates
* chi2      independence test on a contingency table

Every report embeds the tool version, the digests of its inputs, the
configuration it ran under, and (when simulation is involved) the PRNG
identity and seed; re-running a command on identical inputs reproduces the
report byte for byte, so no timestamps or machine state appear in any
output.  Values may also be supplied through a JSON file via --config;
explicit flags win over config entries.

Exit codes: 0 success, 2 usage error, 3 input or data error, 4 campaign
finding (a configured threshold was exceeded).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys

import numpy as np

from . import __version__
from .errors import ClsVerifyError, InsufficientBatches
from .model import (LabeledImage, lambda_value, load_dataset, load_network,
                    forward, outcome_of_probs)
from .classes import (SegmentCheckConfig, TauMap, algorithm1, algorithm2,
                      classify_cluster, load_taumap, save_taumap,
                      tag_to_string)
from .stats import (PRNG_IDENTITY, ProbabilityArray, batch_stats,
                    chi2_independence, coupon_expected_draws,
                    estimate_unknown_class_bound, load_parray,
                    multinomial_counts, outcome_kind, rearrange_batches,
                    required_sample_size, save_parray, simulate_coverage,
                    spawned_generator, student_quantile, student_ucl)
from .risk import (RiskParams, fusion_hazard_rate, pfn, pfn_parametric_sweep,
                   sweep_to_csv)

__all__ = ["main"]


def _emit(doc: dict, out_path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out_path:
        with open(out_path, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset (None) argument values from the --config JSON file."""
    path = getattr(args, "config", None)
    if not path:
        return args
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ClsVerifyError(f"config {path} must hold a JSON object")
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) is None:
            setattr(args, attr, value)
    return args


def _segment_config(args) -> SegmentCheckConfig:
    return SegmentCheckConfig(
        grid_points=int(args.grid_points if args.grid_points is not None
                        else 64),
        delta=float(args.delta if args.delta is not None else 1e-3),
        tolerance=float(args.tolerance if args.tolerance is not None
                        else 0.0))


def _class_id(tag, rep_id: str) -> str:
    return f"{tag_to_string(tag)}::{rep_id}"


# ---------------------------------------------------------------------------
# eval

def _cmd_eval(args) -> int:
    net = load_network(args.model)
    images = load_dataset(args.dataset, net.input_shape)
    if args.id is not None:
        match = [img for img in images if img.id == args.id]
        if not match:
            raise ClsVerifyError(f"image id {args.id!r} not in dataset")
        img = match[0]
    else:
        img = images[0]
    probs = forward(net, img.pixels)
    doc = {
        "tool_version": __version__,
        "model_digest": net.digest,
        "id": img.id,
        "label": sorted(img.label),
        "probs": [float(v) for v in probs],
        "outcome": sorted(outcome_of_probs(net, probs)),
        "cluster": tag_to_string(classify_cluster(net, img)),
        "lambda": {str(j): lambda_value(net, j, img.pixels)
                   for j in range(1, net.num_classes + 1)},
    }
    _emit(doc, args.out)
    return 0


# ---------------------------------------------------------------------------
# identify

def _initial_parray(tau: TauMap) -> ProbabilityArray:
    """Class probabilities as preimage-count ratios over the processed
    images."""
    sizes = tau.class_sizes()
    total = len(tau.entries)
    entries = tuple((_class_id(tau.entries[rep].tag, rep), sizes[rep] / total)
                    for rep in tau.representative_ids)
    return ProbabilityArray(entries=entries)


def _cmd_identify(args) -> int:
    net = load_network(args.model)
    images = load_dataset(args.dataset, net.input_shape)
    cfg = _segment_config(args)
    tau = algorithm1(net, images, cfg)
    save_taumap(tau, args.out_tau)
    parray = _initial_parray(tau)
    save_parray(parray, args.out_parray)

    reps = tau.representative_ids
    tags = [tau.entries[r].tag for r in reps]
    doc = {
        "tool_version": __version__,
        "model_digest": net.digest,
        "config": {"grid_points": cfg.grid_points, "delta": cfg.delta,
                   "tolerance": cfg.tolerance},
        "num_images": len(images),
        "num_entries": len(tau.entries),
        "num_representatives": len(reps),
        "num_clusters": len({tag_to_string(t) for t in tags}),
        "num_false_neg_classes": sum(t.kind == "FalseNeg" for t in tags),
        "num_false_pos_classes": sum(t.kind == "FalsePos" for t in tags),
        "p_true_neg_cluster": math.fsum(
            p for eid, p in parray.entries if outcome_kind(eid) == "TrueNeg"),
        "p_true_pos_cluster": math.fsum(
            p for eid, p in parray.entries if outcome_kind(eid) == "TruePos"),
        "class_sizes": {_class_id(tau.entries[r].tag, r): s
                        for r, s in tau.class_sizes().items()},
        "domain_exits": tau.domain_exit_reports,
        "parray": [[eid, p] for eid, p in parray.entries],
    }
    _emit(doc, args.out)
    return 0


# ---------------------------------------------------------------------------
# verify

def _draw_synthetic_outcomes(parray: ProbabilityArray, total: int, q: int,
                             seed: int) -> list[str]:
    """Per-batch multinomial outcome ids, flattened in batch order."""
    ids = np.array(parray.ids, dtype=object)
    probs = parray.probabilities
    flat: list[str] = []
    for batch_index in range(math.ceil(total / q)):
        size = min(q, total - batch_index * q)
        gen = spawned_generator(seed, batch_index)
        counts = multinomial_counts(gen, size, probs)
        flat.extend(np.repeat(ids, counts).tolist())
    return flat


def _stream_dataset_outcomes(net, tau: TauMap, images, cfg,
                             known_ids: set[str]) -> tuple[list[str],
                                                           list[str]]:
    """Run each verification image through the map extension; returns the
    per-image class ids and the ids of newly founded classes."""
    flat: list[str] = []
    new_classes: list[str] = []
    for img in images:
        tau, made_new = algorithm2(net, tau, img, cfg)
        entry = tau.entries[img.id]
        cid = _class_id(entry.tag, entry.rep)
        flat.append(cid)
        if made_new and cid not in known_ids:
            new_classes.append(cid)
    return flat, new_classes


def _extend_parray(parray: ProbabilityArray, flat: list[str],
                   new_classes: list[str]) -> ProbabilityArray:
    """Append discovered classes at their observed frequency and rescale
    the planned entries to keep the distribution closed."""
    if not new_classes:
        return parray
    total = len(flat)
    new_entries = [(cid, flat.count(cid) / total) for cid in new_classes]
    new_mass = math.fsum(p for _, p in new_entries)
    scale = 1.0 - new_mass
    entries = tuple((eid, p * scale) for eid, p in parray.entries)
    return ProbabilityArray(entries=entries + tuple(new_entries))


def _cmd_verify(args) -> int:
    alpha = float(args.alpha if args.alpha is not None else 1e-3)
    seed = int(args.seed)
    q = int(args.sample_size)
    p_u_start = float(args.p_u_start if args.p_u_start is not None else 1e-4)
    shrink = float(args.shrink_factor if args.shrink_factor is not None
                   else 0.1)
    max_doublings = int(args.max_doublings if args.max_doublings is not None
                        else 8)
    parray = load_parray(args.parray)
    parray_digest = _file_digest(args.parray)

    model_digest = None
    new_classes: list[str] = []
    if args.synthetic_draws is not None:
        mode = "synthetic"
        flat = _draw_synthetic_outcomes(parray, int(args.synthetic_draws),
                                        q, seed)
    else:
        mode = "dataset"
        if not (args.model and args.tau and args.tau_dataset
                and args.dataset):
            raise ClsVerifyError(
                "dataset mode needs --model, --tau, --tau-dataset and "
                "--dataset (or use --synthetic-draws)")
        net = load_network(args.model)
        model_digest = net.digest
        tau = load_taumap(args.tau, load_dataset(args.tau_dataset,
                                                 net.input_shape))
        if tau.net_digest != net.digest:
            raise ClsVerifyError(
                "the representative map was built for a different model "
                f"(map digest {tau.net_digest[:12]}..., model digest "
                f"{net.digest[:12]}...)")
        images = load_dataset(args.dataset, net.input_shape)
        flat, new_classes = _stream_dataset_outcomes(
            net, tau, images, _segment_config(args), set(parray.ids))

    # coverage is judged against the planned classes; discovered classes
    # are reported separately
    universe = set(parray.ids)
    batches = rearrange_batches(flat, q, universe)
    doublings = 0
    while (any(not b.covered_all for b in batches if b.complete)
           and doublings < max_doublings
           and len(flat) // (q * 2) >= 2):
        q *= 2
        doublings += 1
        batches = rearrange_batches(flat, q, universe)

    complete = [b for b in batches if b.complete]
    if len(complete) < 2:
        raise InsufficientBatches(
            f"only {len(complete)} complete batches of size {q}; need 2")
    w = len(complete)
    mfn, sfn, mfp, sfp = batch_stats(complete)
    est_fn = student_ucl(mfn, sfn, w, alpha)
    est_fp = student_ucl(mfp, sfp, w, alpha)

    final_parray = _extend_parray(parray, flat, new_classes)
    p_u = estimate_unknown_class_bound(final_parray, q, w, seed,
                                       p_u_start, shrink)
    p_perp_parray = p_u + math.fsum(
        p for eid, p in final_parray.entries
        if outcome_kind(eid) == "FalseNeg")
    p_avail_parray = math.fsum(
        p for eid, p in final_parray.entries
        if outcome_kind(eid) == "FalsePos")

    doc = {
        "tool_version": __version__,
        "mode": mode,
        "model_digest": model_digest,
        "parray_digest": parray_digest,
        "prng": PRNG_IDENTITY,
        "seed": seed,
        "alpha": alpha,
        "initial_sample_size": int(args.sample_size),
        "final_sample_size": q,
        "doublings": doublings,
        "num_outcomes": len(flat),
        "num_batches_complete": w,
        "batches": [{
            "batch_index": b.batch_index, "q": b.q,
            "false_neg": b.false_neg, "false_pos": b.false_pos,
            "covered_all": b.covered_all, "complete": b.complete,
            "zero_hit_ids": sorted(eid for eid in universe
                                   if b.hits.get(eid, 0) == 0),
        } for b in batches],
        "coverage_all_batches": all(b.covered_all for b in complete),
        "p_perp": dataclasses.asdict(est_fn),
        "p_avail": dataclasses.asdict(est_fp),
        "p_u_bound": p_u,
        "p_u_start": p_u_start,
        "shrink_factor": shrink,
        "p_perp_from_parray": p_perp_parray,
        "p_avail_from_parray": p_avail_parray,
        "new_classes": new_classes,
        "parray_final": [[eid, p] for eid, p in final_parray.entries],
    }
    _emit(doc, args.out)
    if args.ucl_threshold is not None and est_fn.ucl > float(
            args.ucl_threshold):
        return 4
    return 0


# ---------------------------------------------------------------------------
# plan

def _cmd_plan(args) -> int:
    alpha = float(args.alpha if args.alpha is not None else 1e-3)
    parray = load_parray(args.parray)
    doc = {
        "tool_version": __version__,
        "parray_digest": _file_digest(args.parray),
        "alpha": alpha,
        "coupon_expected_draws": coupon_expected_draws(parray),
    }
    if args.e_max is not None:
        p_hat = float(args.p_hat if args.p_hat is not None else 0.5)
        doc["required_sample_size"] = required_sample_size(
            p_hat, float(args.e_max), alpha)
        doc["p_hat"] = p_hat
        doc["e_max"] = float(args.e_max)
    w_candidates = [int(v) for v in
                    (args.w_candidates or "2,5,10").split(",")]
    doc["t_multipliers"] = {str(w): student_quantile(1.0 - alpha, w - 1)
                            for w in w_candidates}
    doc["margin_per_unit_std"] = {
        str(w): student_quantile(1.0 - alpha, w - 1) / math.sqrt(w)
        for w in w_candidates}
    if args.sample_size is not None and args.seed is not None:
        num_samples = int(args.num_samples if args.num_samples is not None
                          else 5)
        samples = simulate_coverage(parray, int(args.sample_size),
                                    num_samples, int(args.seed))
        doc["coverage"] = {
            "prng": PRNG_IDENTITY,
            "seed": int(args.seed),
            "sample_size": int(args.sample_size),
            "num_samples": num_samples,
            "all_covered": all(s.covered_all for s in samples),
            "zero_hits_per_sample": [list(s.zero_hit_ids) for s in samples],
        }
    _emit(doc, args.out)
    return 0


# ---------------------------------------------------------------------------
# risk

def _cmd_risk(args) -> int:
    env_degraded = float(args.env_degraded if args.env_degraded is not None
                         else 0.001)
    params = RiskParams(
        p_n=float(args.pn),
        p_c=float(args.pc),
        p_v=float(args.pv if args.pv is not None else 1e-6),
        p_comm=float(args.pcomm if args.pcomm is not None else 1e-7),
        p_sensor_fault=float(args.psensor if args.psensor is not None
                             else 0.0),
        p_degrade_detect=float(args.pdegrade if args.pdegrade is not None
                               else 0.0),
        env=((1, 1.0 - env_degraded), (2, env_degraded)),
        lambda_od=float(args.lambda_od if args.lambda_od is not None
                        else 2.0 / 24.0))
    value, breakdown = pfn(params)
    report = fusion_hazard_rate(params, value, breakdown)
    doc = {
        "tool_version": __version__,
        "params": {
            "p_n": params.p_n, "p_c": params.p_c, "p_v": params.p_v,
            "p_comm": params.p_comm,
            "p_sensor_fault": params.p_sensor_fault,
            "p_degrade_detect": params.p_degrade_detect,
            "env": {str(d): w for d, w in params.env},
            "lambda_od": params.lambda_od,
        },
        "pfn": report.pfn,
        "hazard_rate_single": report.hazard_rate_single,
        "hazard_rate_3oo3": report.hazard_rate_3oo3,
        "breakdown": {label: p for label, p in report.breakdown},
    }
    if args.sweep_csv:
        lo = float(args.sweep_min if args.sweep_min is not None else 0.02)
        hi = float(args.sweep_max if args.sweep_max is not None else 0.1)
        steps = int(args.sweep_steps if args.sweep_steps is not None else 9)
        grid = [lo + (hi - lo) * i / (steps - 1) for i in range(steps)]
        sweep_to_csv(pfn_parametric_sweep(grid, grid, params),
                     args.sweep_csv)
        doc["sweep_csv"] = args.sweep_csv
    if args.thr is not None:
        doc["thr"] = float(args.thr)
        doc["exceeds_thr"] = report.hazard_rate_3oo3 > float(args.thr)
    _emit(doc, args.out)
    if args.thr is not None and report.hazard_rate_3oo3 > float(args.thr):
        return 4
    return 0


# ---------------------------------------------------------------------------
# chi2

def _cmd_chi2(args) -> int:
    if args.table_file:
        with open(args.table_file, "r", encoding="utf-8") as fh:
            table = json.load(fh)
    else:
        table = json.loads(args.table)
    alpha = float(args.chi_alpha if args.chi_alpha is not None else 0.05)
    stat, df, reject = chi2_independence(table, alpha)
    _emit({
        "tool_version": __version__,
        "table": table,
        "alpha": alpha,
        "statistic": stat,
        "df": df,
        "reject": reject,
    }, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_segment_flags(sub) -> None:
    sub.add_argument("--grid-points", type=int, default=None)
    sub.add_argument("--delta", type=float, default=None)
    sub.add_argument("--tolerance", type=float, default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clsverify",
        description="Classification-network partition testing and "
                    "statistical verification")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        sub.add_argument("--config", default=None,
                         help="JSON file with default values for flags")
        sub.add_argument("--out", default=None,
                         help="write the report here instead of stdout")

    s = subs.add_parser("eval", help="forward pass of one image")
    common(s)
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--id", default=None)
    s.set_defaults(func=_cmd_eval)

    s = subs.add_parser("identify", help="build the representative map")
    common(s)
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out-tau", required=True)
    s.add_argument("--out-parray", required=True)
    _add_segment_flags(s)
    s.set_defaults(func=_cmd_identify)

    s = subs.add_parser("verify", help="run a verification campaign")
    common(s)
    s.add_argument("--parray", required=True)
    s.add_argument("--sample-size", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--synthetic-draws", type=int, default=None,
                   help="draw this many outcomes from the array instead of "
                        "processing a dataset")
    s.add_argument("--model", default=None)
    s.add_argument("--tau", default=None)
    s.add_argument("--tau-dataset", default=None,
                   help="dataset the map was built from (re-binds pixels)")
    s.add_argument("--dataset", default=None,
                   help="labeled verification images")
    s.add_argument("--p-u-start", type=float, default=None)
    s.add_argument("--shrink-factor", type=float, default=None)
    s.add_argument("--max-doublings", type=int, default=None)
    s.add_argument("--ucl-threshold", type=float, default=None)
    _add_segment_flags(s)
    s.set_defaults(func=_cmd_verify)

    s = subs.add_parser("plan", help="sample sizing and coverage planning")
    common(s)
    s.add_argument("--parray", required=True)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--p-hat", type=float, default=None)
    s.add_argument("--e-max", type=float, default=None)
    s.add_argument("--w-candidates", default=None)
    s.add_argument("--sample-size", type=int, default=None)
    s.add_argument("--num-samples", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=_cmd_plan)

    s = subs.add_parser("risk", help="voted-detector hazard quantification")
    common(s)
    s.add_argument("--pn", type=float, required=True)
    s.add_argument("--pc", type=float, required=True)
    s.add_argument("--pv", type=float, default=None)
    s.add_argument("--pcomm", type=float, default=None)
    s.add_argument("--psensor", type=float, default=None)
    s.add_argument("--pdegrade", type=float, default=None)
    s.add_argument("--lambda-od", type=float, default=None)
    s.add_argument("--env-degraded", type=float, default=None)
    s.add_argument("--thr", type=float, default=None)
    s.add_argument("--sweep-csv", default=None)
    s.add_argument("--sweep-min", type=float, default=None)
    s.add_argument("--sweep-max", type=float, default=None)
    s.add_argument("--sweep-steps", type=int, default=None)
    s.set_defaults(func=_cmd_risk)

    s = subs.add_parser("chi2", help="contingency-table independence test")
    common(s)
    s.add_argument("--table", default=None,
                   help="JSON rows, e.g. '[[20,30],[30,20]]'")
    s.add_argument("--table-file", default=None)
    s.add_argument("--chi-alpha", type=float, default=None)
    s.set_defaults(func=_cmd_chi2)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        if args.command == "chi2" and not (args.table or args.table_file):
            parser.error("chi2 needs --table or --table-file")
        return args.func(args)
    except (ClsVerifyError, OSError, json.JSONDecodeError, IndexError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
