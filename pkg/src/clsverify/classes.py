"""Input-space partitioning: cluster tags, null-segment connectivity, and
the incremental equivalence-class construction.

Every labeled image falls into exactly one classification cluster, the
combination of the network's outcome on it and its ground-truth label:

* TrueNeg            outcome empty, label empty
* FalseNeg(I)        outcome empty, label I nonempty (safety-critical)
* TruePos(I)         outcome I, label I nonempty
* FalsePos(J)        outcome J nonempty, label empty (availability-critical)
* WrongType(I->J)    outcome J, label I, both nonempty, I != J

Within one cluster, two images belong to the same equivalence class when
they are connected by straight segments along which the activation distance
of the shared outcome stays zero and the outcome itself never changes.
``is_null_segment`` decides that at a configurable uniform grid resolution;
the grid density is recorded so connections can be re-checked later at any
densification.

``algorithm1`` processes a labeled dataset in input order and builds the
representative map tau: each image either joins the class of the first
earlier image it connects to directly (Step A), joins after a small inward
step off the zero-set boundary (Step B, see note), or founds a new class
(Step C).  ``algorithm2`` applies the same steps to one new image against an
existing map, reporting whether a new class was created.

Step B note: the inward step uses the boundary-aware gradient.  Because the
outcome's activation distance is exactly zero at every processed image, the
convention gradient vanishes at interior pixels, so a nonzero step direction
can only come from one-sided derivatives at pixels sitting exactly at 0 or
1 -- and such a step always leaves the pixel domain.  The step is therefore
computed faithfully and the affected images are reported on the map's
diagnostics list rather than silently skipped.
"""

from __future__ import annotations

import dataclasses
import json
import re
from typing import Iterable

import numpy as np

from .errors import DomainError, LabelMismatch, ParseError
from .model import (LabeledImage, NetworkSpec, argmax_last, forward,
                    forward_batch, outcome_of_probs)
from .calculus import boundary_gradient_for_labels

__all__ = [
    "ClusterTag",
    "SegmentCheckConfig",
    "SegmentSample",
    "TauEntry",
    "TauMap",
    "cls_tag",
    "classify_cluster",
    "tag_to_string",
    "tag_from_string",
    "is_null_segment",
    "algorithm1",
    "algorithm2",
    "recheck_connections",
    "save_taumap",
    "load_taumap",
]

_TAG_RE = re.compile(r"^(TrueNeg|TruePos|FalseNeg|FalsePos|WrongType)"
                     r"(?:\[([0-9,]+)(?:->([0-9,]+))?\])?$")


@dataclasses.dataclass(frozen=True)
class ClusterTag:
    """Cluster identity: correctness kind plus the label/outcome sets."""

    kind: str
    label: frozenset[int]
    outcome: frozenset[int]


def cls_tag(outcome: frozenset[int], label: frozenset[int]) -> ClusterTag:
    """Total map from (network outcome, ground-truth label) to the tag."""
    outcome = frozenset(outcome)
    label = frozenset(label)
    if not outcome:
        if not label:
            return ClusterTag("TrueNeg", label, outcome)
        return ClusterTag("FalseNeg", label, outcome)
    if label == outcome:
        return ClusterTag("TruePos", label, outcome)
    if not label:
        return ClusterTag("FalsePos", label, outcome)
    return ClusterTag("WrongType", label, outcome)


def classify_cluster(net: NetworkSpec, img: LabeledImage) -> ClusterTag:
    """Evaluate the network on the image and tag its cluster."""
    return cls_tag(outcome_of_probs(net, forward(net, img.pixels)), img.label)


def _fmt_set(s: frozenset[int]) -> str:
    return ",".join(str(v) for v in sorted(s))


def tag_to_string(tag: ClusterTag) -> str:
    if tag.kind == "TrueNeg":
        return "TrueNeg"
    if tag.kind == "FalseNeg":
        return f"FalseNeg[{_fmt_set(tag.label)}]"
    if tag.kind == "TruePos":
        return f"TruePos[{_fmt_set(tag.label)}]"
    if tag.kind == "FalsePos":
        return f"FalsePos[{_fmt_set(tag.outcome)}]"
    return f"WrongType[{_fmt_set(tag.label)}->{_fmt_set(tag.outcome)}]"


def tag_from_string(text: str) -> ClusterTag:
    m = _TAG_RE.match(text)
    if not m:
        raise ParseError(f"not a cluster tag: {text!r}")
    kind, first, second = m.group(1), m.group(2), m.group(3)
    # only canonical spellings parse: TrueNeg never carries a set, every
    # other kind always does, and WrongType needs both
    if (kind == "TrueNeg") != (first is None):
        raise ParseError(f"malformed cluster tag: {text!r}")
    if (second is not None) != (kind == "WrongType"):
        raise ParseError(f"malformed cluster tag: {text!r}")

    def parse_set(chunk: str | None) -> frozenset[int]:
        if not chunk:
            return frozenset()
        return frozenset(int(v) for v in chunk.split(","))

    if kind == "TrueNeg":
        return ClusterTag(kind, frozenset(), frozenset())
    if kind == "FalseNeg":
        return ClusterTag(kind, parse_set(first), frozenset())
    if kind == "TruePos":
        s = parse_set(first)
        return ClusterTag(kind, s, s)
    if kind == "FalsePos":
        return ClusterTag(kind, frozenset(), parse_set(first))
    return ClusterTag(kind, parse_set(first), parse_set(second))


@dataclasses.dataclass(frozen=True)
class SegmentCheckConfig:
    """Parameters of the sampled segment check.

    grid_points uniform samples of t in [0, 1] (endpoints included) decide
    nullness; tolerance widens the zero test (default exact); delta is the
    inward-step length of the boundary handling.
    """

    grid_points: int = 64
    delta: float = 1e-3
    tolerance: float = 0.0

    def __post_init__(self) -> None:
        if self.grid_points < 2:
            raise DomainError("grid_points must be at least 2")
        if self.delta <= 0.0:
            raise DomainError("delta must be positive")
        if self.tolerance < 0.0:
            raise DomainError("tolerance must be nonnegative")


@dataclasses.dataclass(frozen=True)
class SegmentSample:
    """One grid point of a segment check."""

    t: float
    value: float
    outcome: frozenset[int]


def _lambda_batch(net: NetworkSpec, labels: frozenset[int],
                  probs: np.ndarray) -> np.ndarray:
    """Activation distance for outcome ``labels`` on a batch of outputs."""
    if net.head == "softmax":
        if not labels:
            j = net.num_classes
        elif len(labels) == 1:
            j = next(iter(labels))
        else:
            raise DomainError("a softmax head reports at most one type, "
                              f"got outcome set {set(labels)}")
        return np.maximum(probs - probs[:, j - 1:j], 0.0).sum(axis=1)
    if labels:
        idx = np.array(sorted(labels), dtype=int) - 1
        return np.maximum(0.5 - probs[:, idx], 0.0).sum(axis=1)
    return np.maximum(probs - 0.5, 0.0).sum(axis=1)


def _outcomes_batch(net: NetworkSpec, probs: np.ndarray) -> list[frozenset[int]]:
    if net.head == "softmax":
        winners = probs.shape[1] - 1 - np.argmax(probs[:, ::-1], axis=1)
        return [frozenset() if int(w) + 1 == net.num_classes
                else frozenset({int(w) + 1}) for w in winners]
    return [frozenset(int(i) + 1 for i in np.nonzero(row >= 0.5)[0])
            for row in probs]


def is_null_segment(net: NetworkSpec, labels: frozenset[int] | int,
                    a: LabeledImage, b: LabeledImage,
                    cfg: SegmentCheckConfig) -> tuple[bool, list[SegmentSample]]:
    """Decide whether the straight segment from a to b stays inside the
    outcome's zero set with a constant outcome.

    ``labels`` is the outcome whose activation distance must vanish, given
    as a label set or, for a softmax head, a 1-based class index.  Both
    images must carry the same ground-truth label set; the shared label is
    what keeps the correctness flag meaningful along the segment.

    Returns the decision together with the per-grid-point trace.
    """
    if isinstance(labels, (int, np.integer)):
        j = int(labels)
        if not 1 <= j <= net.num_classes:
            raise IndexError(f"class index {j} outside 1..{net.num_classes}")
        if net.head == "softmax" and j == net.num_classes:
            labels = frozenset()
        else:
            labels = frozenset({j})
    if a.label != b.label:
        raise LabelMismatch(f"segment endpoints carry different labels: "
                            f"{set(a.label)} vs {set(b.label)}")
    ts = np.linspace(0.0, 1.0, cfg.grid_points)
    points = ((1.0 - ts)[:, None] * a.pixels.reshape(1, -1)
              + ts[:, None] * b.pixels.reshape(1, -1))
    probs = forward_batch(net, points.reshape((len(ts),) + net.input_shape))
    values = _lambda_batch(net, labels, probs)
    outcomes = _outcomes_batch(net, probs)
    trace = [SegmentSample(float(t), float(v), o)
             for t, v, o in zip(ts, values, outcomes)]
    ok = bool(np.all(values <= cfg.tolerance)) and all(
        o == outcomes[0] for o in outcomes)
    return ok, trace


# ---------------------------------------------------------------------------
# The representative map

@dataclasses.dataclass(eq=False)
class TauEntry:
    rep: str
    tag: ClusterTag
    evidence: list[dict]


class TauMap:
    """Mapping from processed image ids to class-representative ids.

    Entries keep insertion order, which makes repeated runs over the same
    input order byte-identical.  Non-representative entries carry evidence
    records (segment endpoints and check parameters) sufficient to re-check
    the recorded connection.  ``domain_exit_reports`` collects diagnostics
    for images whose boundary step left the pixel domain; it is in-memory
    only and not part of the serialized form.
    """

    def __init__(self, net_digest: str, config: SegmentCheckConfig) -> None:
        self.net_digest = net_digest
        self.config = config
        self.entries: dict[str, TauEntry] = {}
        self.pixels: dict[str, np.ndarray] = {}
        self.domain_exit_reports: list[dict] = []

    def rep_of(self, image_id: str) -> str:
        return self.entries[image_id].rep

    @property
    def representative_ids(self) -> list[str]:
        return [eid for eid, e in self.entries.items() if e.rep == eid]

    def candidates_with_tag(self, tag: ClusterTag) -> list[str]:
        return [eid for eid, e in self.entries.items() if e.tag == tag]

    def add(self, image_id: str, pixels: np.ndarray, rep: str,
            tag: ClusterTag, evidence: list[dict]) -> None:
        if image_id in self.entries:
            raise DomainError(f"image id {image_id!r} already processed")
        self.entries[image_id] = TauEntry(rep=rep, tag=tag, evidence=evidence)
        self.pixels[image_id] = np.array(pixels, dtype=np.float64)

    def class_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for entry in self.entries.values():
            sizes[entry.rep] = sizes.get(entry.rep, 0) + 1
        return sizes


def _segment_evidence(from_id: str, to_id: str,
                      cfg: SegmentCheckConfig) -> dict:
    return {"kind": "segment", "from": from_id, "to": to_id,
            "grid_points": cfg.grid_points, "tolerance": cfg.tolerance}


def _step_evidence(from_id: str, point: np.ndarray, delta: float) -> dict:
    return {"kind": "inward_step", "from": from_id,
            "point": [float(v) for v in point.ravel()], "delta": delta}


def _as_labeled(image_id: str, pixels: np.ndarray,
                label: frozenset[int]) -> LabeledImage:
    return LabeledImage(id=image_id, pixels=pixels, label=label)


def _flag_constant_on_step(net: NetworkSpec, tag: ClusterTag,
                           start: np.ndarray, end: np.ndarray,
                           cfg: SegmentCheckConfig) -> bool:
    """Outcome and nullness at 8 points of the inward step segment."""
    ts = np.linspace(0.0, 1.0, 8)
    points = ((1.0 - ts)[:, None] * start.reshape(1, -1)
              + ts[:, None] * end.reshape(1, -1))
    probs = forward_batch(net, points.reshape((len(ts),) + net.input_shape))
    values = _lambda_batch(net, tag.outcome, probs)
    outcomes = _outcomes_batch(net, probs)
    return bool(np.all(values <= cfg.tolerance)) and all(
        o == tag.outcome for o in outcomes)


def _try_connect(net: NetworkSpec, tau: TauMap, tag: ClusterTag,
                 image_id: str, pixels: np.ndarray,
                 cfg: SegmentCheckConfig) -> tuple[str, dict] | None:
    """Step A: first insertion-ordered entry of the same tag reachable on a
    null segment."""
    probe = _as_labeled(image_id, pixels, tag.label)
    for cand_id in tau.candidates_with_tag(tag):
        cand = _as_labeled(cand_id, tau.pixels[cand_id], tag.label)
        ok, _ = is_null_segment(net, tag.outcome, probe, cand, cfg)
        if ok:
            return cand_id, _segment_evidence(image_id, cand_id, cfg)
    return None


def _process_image(net: NetworkSpec, tau: TauMap, img: LabeledImage,
                   cfg: SegmentCheckConfig) -> bool:
    """Steps A/B/C for one image; returns True iff a new class was made."""
    tag = classify_cluster(net, img)

    hit = _try_connect(net, tau, tag, img.id, img.pixels, cfg)
    if hit is not None:
        cand_id, evidence = hit
        tau.add(img.id, img.pixels, tau.rep_of(cand_id), tag, [evidence])
        return False

    # Step B: boundary handling.  The trigger needs a nonzero
    # boundary-aware gradient at a null point; see the module docstring for
    # why a triggered step can only exit the pixel domain.
    grad = boundary_gradient_for_labels(net, tag.outcome, img.pixels)
    if np.any(grad != 0.0):
        inner = img.pixels - cfg.delta * grad
        if inner.min() < 0.0 or inner.max() > 1.0:
            tau.domain_exit_reports.append({
                "id": img.id, "delta": cfg.delta,
                "gradient_max": float(np.abs(grad).max())})
        elif _flag_constant_on_step(net, tag, img.pixels, inner, cfg):
            hit = _try_connect(net, tau, tag, img.id + "::inward", inner, cfg)
            if hit is not None:
                cand_id, seg_evidence = hit
                rep = tau.rep_of(cand_id)
                step_evidence = _step_evidence(img.id, inner, cfg.delta)
                tau.add(img.id, img.pixels, rep, tag,
                        [step_evidence, seg_evidence])
                tau.add(img.id + "::inward", inner, rep, tag,
                        [step_evidence, seg_evidence])
                return False

    tau.add(img.id, img.pixels, img.id, tag, [])
    return True


def algorithm1(net: NetworkSpec, data: Iterable[LabeledImage],
               cfg: SegmentCheckConfig) -> TauMap:
    """Build the representative map over a dataset in input order."""
    data = list(data)
    if not data:
        raise DomainError("algorithm needs at least one image")
    tau = TauMap(net.digest, cfg)
    for img in data:
        _process_image(net, tau, img, cfg)
    return tau


def algorithm2(net: NetworkSpec, tau: TauMap, img: LabeledImage,
               cfg: SegmentCheckConfig) -> tuple[TauMap, bool]:
    """Extend an existing map by one verification image.

    Returns the updated map and True iff the image founded a new class
    (which obliges the campaign layer to extend its probability array).
    """
    return tau, _process_image(net, tau, img, cfg)


def recheck_connections(net: NetworkSpec, tau: TauMap,
                        densify: int = 1) -> list[str]:
    """Re-run every recorded segment at ``densify`` times the recorded grid
    density; returns ids of entries whose evidence no longer verifies."""
    failures: list[str] = []
    for eid, entry in tau.entries.items():
        for record in entry.evidence:
            if record["kind"] != "segment":
                continue
            cfg = SegmentCheckConfig(
                grid_points=int(record["grid_points"]) * densify,
                delta=tau.config.delta,
                tolerance=float(record["tolerance"]))
            a = _as_labeled(record["from"], tau.pixels[record["from"]],
                            entry.tag.label)
            b = _as_labeled(record["to"], tau.pixels[record["to"]],
                            entry.tag.label)
            ok, _ = is_null_segment(net, entry.tag.outcome, a, b, cfg)
            if not ok:
                failures.append(eid)
    return failures


# ---------------------------------------------------------------------------
# Persistence

def save_taumap(tau: TauMap, path) -> None:
    doc = {"entries": {
        eid: {"rep": e.rep, "tag": tag_to_string(e.tag),
              "evidence": e.evidence}
        for eid, e in tau.entries.items()},
        "config": {"grid_points": tau.config.grid_points,
                   "delta": tau.config.delta,
                   "tolerance": tau.config.tolerance},
        "net_digest": tau.net_digest}
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_taumap(path, images: Iterable[LabeledImage]) -> TauMap:
    """Load a map and re-bind entry pixels from the originating dataset.

    Synthetic inward-step entries recover their pixels from the recorded
    step evidence; every other entry id must be present in ``images``.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read tau map {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"tau map {path} is not valid JSON: {exc}") from exc
    try:
        cfg = SegmentCheckConfig(
            grid_points=int(doc["config"]["grid_points"]),
            delta=float(doc["config"]["delta"]),
            tolerance=float(doc["config"]["tolerance"]))
        tau = TauMap(str(doc["net_digest"]), cfg)
        by_id = {img.id: img for img in images}
        shape = next(iter(by_id.values())).pixels.shape if by_id else None
        for eid, raw in doc["entries"].items():
            entry = TauEntry(rep=str(raw["rep"]),
                             tag=tag_from_string(raw["tag"]),
                             evidence=list(raw["evidence"]))
            if eid in by_id:
                pixels = by_id[eid].pixels
            else:
                point = next((r["point"] for r in entry.evidence
                              if r.get("kind") == "inward_step"), None)
                if point is None or shape is None:
                    raise ParseError(f"entry {eid!r} has no pixels in the "
                                     "supplied dataset")
                pixels = np.array(point, dtype=np.float64).reshape(shape)
            tau.entries[eid] = entry
            tau.pixels[eid] = np.array(pixels, dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed tau map {path}: {exc}") from exc
    return tau
