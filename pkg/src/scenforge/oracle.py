"""Trace metrics, behaviour classification and lift-based trigger mining.

Traces are JSON lines ``{"t", "x", "y", "v", "heading"}``. Acceleration is
always derived from v, never read from the log. Signal logs share the
format ``{"t", "signal_id", "state"}``.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from shapely.affinity import rotate, translate
from shapely.geometry import LineString, Point, box

from .config import OracleThresholds, read_text
from .document import ScenarioDocument
from .errors import DegenerateDistribution, MissingGoal, NonMonotonicTime, OracleError, TooFewSamples
from .map_graph import WorldPose

log = logging.getLogger(__name__)

CATEGORIES = ("failure_to_start", "misinterpretation", "collision", "plan_failure", "smoothness_issue")
SIGNAL_REACH = 15.0  # how far across the road a signal's stop line extends, m


@dataclass(frozen=True)
class TraceSample:
    t: float
    x: float
    y: float
    v: float
    heading: float

    def __post_init__(self):
        if not all(math.isfinite(getattr(self, k)) for k in ("t", "x", "y", "v", "heading")):
            raise OracleError(f"non-finite trace sample at t={self.t}")


@dataclass(frozen=True)
class KinematicSeries:
    dt: float
    t: np.ndarray  # resampled grid
    v: np.ndarray
    t_a: np.ndarray
    a: np.ndarray
    t_jerk: np.ndarray
    jerk: np.ndarray
    t_yaw: np.ndarray
    yaw_rate: np.ndarray  # rad/s
    avg_jerk: np.ndarray
    avg_yaw_rate: np.ndarray
    window: float = 1.0


@dataclass(frozen=True)
class BehaviorFinding:
    category: str
    t_start: float
    t_end: float
    evidence: Mapping = field(default_factory=dict)
    node_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {"category": self.category, "t_start": round(self.t_start, 6), "t_end": round(self.t_end, 6),
                "evidence": dict(self.evidence), "node_id": self.node_id}


@dataclass(frozen=True)
class TriggerAssociation:
    feature: str
    category: str
    lift: float
    n_fc: int  # support: nodes with both
    n_f: int
    n_c: int
    n: int

    def to_row(self) -> list:
        return [self.feature, self.category, f"{self.lift:.6f}", self.n_fc, self.n_f, self.n_c, self.n]


# -- kinematics ----------------------------------------------------------------

def _check_trace(trace: Sequence[TraceSample]) -> np.ndarray:
    if len(trace) < 3:
        raise TooFewSamples(f"need at least 3 samples, got {len(trace)}")
    t = np.array([s.t for s in trace], dtype=float)
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        i = int(bad[0])
        raise NonMonotonicTime(f"time does not increase at sample {i + 1} (t={t[i]} -> {t[i + 1]})")
    return t


def moving_average(series, window: float, dt: float = 1.0) -> np.ndarray:
    """Trailing mean over the last round(window/dt) samples.

    During warm-up (fewer samples than the window) the mean runs over the
    samples available so far.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return x
    n = max(1, int(round(window / dt)))
    c = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - n, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def compute_kinematics(trace: Sequence[TraceSample], jerk_interval: float = 0.01,
                       band: tuple = (0.005, 0.015), window: float = 1.0) -> KinematicSeries:
    """Finite-difference acceleration, jerk and yaw rate on a uniform grid.

    The trace is resampled (linear interpolation, heading unwrapped first)
    to a grid with spacing ``jerk_interval``. Each derivative sits at the
    midpoints of its input, so it is one sample shorter.
    """
    t = _check_trace(trace)
    lo, hi = band
    if not lo - 1e-12 <= jerk_interval <= hi + 1e-12:
        raise OracleError(f"jerk interval {jerk_interval} s outside the band [{lo}, {hi}]")
    v = np.array([s.v for s in trace], dtype=float)
    psi = np.unwrap(np.array([s.heading for s in trace], dtype=float))
    n = int(math.floor((t[-1] - t[0]) / jerk_interval + 1e-9)) + 1
    if n < 3:
        raise TooFewSamples(f"trace spans {t[-1] - t[0]:.4f} s, too short for interval {jerk_interval} s")
    grid = t[0] + jerk_interval * np.arange(n)
    vg = np.interp(grid, t, v)
    pg = np.interp(grid, t, psi)
    h = jerk_interval
    a = np.diff(vg) / h
    t_a = grid[:-1] + h / 2
    jerk = np.diff(a) / h
    t_j = t_a[:-1] + h / 2
    yaw = np.diff(pg) / h
    return KinematicSeries(h, grid, vg, t_a, a, t_j, jerk, t_a.copy(), yaw,
                           moving_average(jerk, window, h), moving_average(yaw, window, h), window)


def _spans(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive index pairs."""
    out, start = [], None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            out.append((start, i - 1))
            start = None
    if start is not None:
        out.append((start, len(mask) - 1))
    return out


def detect_collision(series: KinematicSeries, threshold: float = 300.0) -> list[BehaviorFinding]:
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    out = []
    for i, j in _spans(np.abs(series.jerk) > threshold):
        seg = series.jerk[i:j + 1]
        peak = float(seg[np.argmax(np.abs(seg))])
        out.append(BehaviorFinding("collision", float(series.t_jerk[i]), float(series.t_jerk[j]),
                                   {"jerk": round(peak, 6), "threshold": threshold}))
    return out


def assess_smoothness(series: KinematicSeries, jerk_limit: float = 0.9,
                      yaw_limit_deg: float = 10.0) -> list[BehaviorFinding]:
    """Spans where the window-averaged |jerk| or |yaw rate| leaves its comfort band."""
    out = []
    for i, j in _spans(np.abs(series.avg_jerk) > jerk_limit):
        seg = series.avg_jerk[i:j + 1]
        out.append(BehaviorFinding("smoothness_issue", float(series.t_jerk[i]), float(series.t_jerk[j]),
                                   {"metric": "jerk", "limit": jerk_limit,
                                    "peak": round(float(seg[np.argmax(np.abs(seg))]), 6),
                                    "interval": [round(float(series.t_jerk[i]), 6), round(float(series.t_jerk[j]), 6)]}))
    limit = math.radians(yaw_limit_deg)
    for i, j in _spans(np.abs(series.avg_yaw_rate) > limit):
        seg = series.avg_yaw_rate[i:j + 1]
        out.append(BehaviorFinding("smoothness_issue", float(series.t_yaw[i]), float(series.t_yaw[j]),
                                   {"metric": "yaw_rate", "limit": yaw_limit_deg,
                                    "peak": round(math.degrees(float(seg[np.argmax(np.abs(seg))])), 6),
                                    "interval": [round(float(series.t_yaw[i]), 6), round(float(series.t_yaw[j]), 6)]}))
    return out


# -- scenario facts ------------------------------------------------------------

def _parameters(doc: ScenarioDocument) -> dict:
    params = doc.xml.find("ParameterDeclarations")
    if params is None:
        return {}
    return {p.get("name"): float(p.get("value")) for p in params.findall("ParameterDeclaration")}


def goal_from_document(doc: ScenarioDocument) -> WorldPose:
    p = _parameters(doc)
    if "EgoGoalX" not in p or "EgoGoalY" not in p:
        raise MissingGoal("scenario declares no EgoGoalX/EgoGoalY")
    return WorldPose(p["EgoGoalX"], p["EgoGoalY"], p.get("EgoGoalH", 0.0))


def signal_positions(doc: ScenarioDocument) -> dict[str, WorldPose]:
    p = _parameters(doc)
    out = {}
    for name, x in p.items():
        if name.startswith("Signal_") and name.endswith("_X"):
            sid = name[len("Signal_"):-2]
            out[sid] = WorldPose(x, p[f"Signal_{sid}_Y"], p.get(f"Signal_{sid}_H", 0.0))
    return out


def obstacle_footprints(doc: ScenarioDocument) -> dict:
    """Static obstacle polygons from MiscObject boxes and their teleport poses."""
    poses = {}
    for priv in doc.xml.iter("Private"):
        wp = priv.find(".//TeleportAction/Position/WorldPosition")
        if wp is not None:
            poses[priv.get("entityRef")] = (float(wp.get("x")), float(wp.get("y")), float(wp.get("h", 0)))
    out = {}
    for obj in doc.xml.iter("ScenarioObject"):
        misc = obj.find("MiscObject")
        name = obj.get("name")
        if misc is None or name not in poses:
            continue
        dims = misc.find("BoundingBox/Dimensions")
        length, width = float(dims.get("length")), float(dims.get("width"))
        x, y, h = poses[name]
        poly = box(-length / 2, -width / 2, length / 2, width / 2)
        out[name] = translate(rotate(poly, h, origin=(0, 0), use_radians=True), x, y)
    return out


def load_trace(path: str | Path) -> list[TraceSample]:
    out = []
    for n, line in enumerate(read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append(TraceSample(float(d["t"]), float(d["x"]), float(d["y"]), float(d["v"]), float(d["heading"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise OracleError(f"{path}:{n}: bad trace sample ({exc})") from None
    return out


def load_signal_log(path: str | Path) -> list[dict]:
    out = []
    for n, line in enumerate(read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append({"t": float(d["t"]), "signal_id": str(d["signal_id"]), "state": str(d["state"])})
        except (ValueError, KeyError, TypeError) as exc:
            raise OracleError(f"{path}:{n}: bad signal record ({exc})") from None
    return sorted(out, key=lambda r: r["t"])


def _state_at(log_: Sequence[Mapping], signal_id: str, t: float) -> Optional[str]:
    state = None
    for rec in log_:
        if rec["t"] > t:
            break
        if rec["signal_id"] == signal_id:
            state = rec["state"]
    return state


def _red_crossings(trace, signals: Mapping[str, WorldPose], log_) -> list[BehaviorFinding]:
    out = []
    for sid, pose in sorted(signals.items()):
        fx, fy = math.cos(pose.heading), math.sin(pose.heading)
        prev = None
        for s in trace:
            dx, dy = s.x - pose.x, s.y - pose.y
            along = dx * fx + dy * fy
            lateral = -dx * fy + dy * fx  # left of the anchor is onto the road
            if prev is not None and prev < 0 <= along and -1.0 <= lateral <= SIGNAL_REACH:
                if _state_at(log_, sid, s.t) == "red":
                    out.append(BehaviorFinding("misinterpretation", s.t, s.t,
                                               {"reason": "red_light", "signal_id": sid}))
                    break
            prev = along
    return out


def _obstacle_contacts(trace, footprints: Mapping) -> list[BehaviorFinding]:
    out = []
    if not footprints:
        return out
    for name, poly in sorted(footprints.items()):
        for a, b in zip(trace, trace[1:]):
            seg = LineString([(a.x, a.y), (b.x, b.y)]) if (a.x, a.y) != (b.x, b.y) else Point(a.x, a.y)
            if seg.intersects(poly):
                out.append(BehaviorFinding("misinterpretation", a.t, b.t,
                                           {"reason": "obstacle_contact", "obstacle": name}))
                break
    return out


def classify_behaviors(trace: Sequence[TraceSample], scenario: Optional[ScenarioDocument],
                       goal: Optional[WorldPose] = None, signal_log: Optional[Sequence[Mapping]] = None,
                       thresholds: Optional[OracleThresholds] = None,
                       node_id: Optional[str] = None) -> list[BehaviorFinding]:
    """Findings for one run.

    failure_to_start and misinterpretation each exclude every other
    category; collision, plan_failure and smoothness may co-occur.
    """
    th = thresholds or OracleThresholds()
    if goal is None:
        if scenario is None:
            raise MissingGoal("no goal given and no scenario to read it from")
        goal = goal_from_document(scenario)
    t = _check_trace(trace)
    t0 = t[0]
    x0, y0 = trace[0].x, trace[0].y
    early = [s for s in trace if s.t - t0 <= th.t_start]
    moved = max(math.hypot(s.x - x0, s.y - y0) for s in early)
    findings: list[BehaviorFinding] = []
    if moved < th.eps_move:
        findings = [BehaviorFinding("failure_to_start", t0, float(early[-1].t),
                                    {"max_displacement": round(moved, 6), "eps_move": th.eps_move,
                                     "t_start": th.t_start})]
    else:
        if scenario is not None:
            findings = _obstacle_contacts(trace, obstacle_footprints(scenario))
            if signal_log:
                findings += _red_crossings(trace, signal_positions(scenario), signal_log)
        if not findings:
            series = compute_kinematics(trace, th.jerk_interval, th.jerk_band, th.window)
            findings = detect_collision(series, th.collision_jerk)
            last = trace[-1]
            miss = math.hypot(last.x - goal.x, last.y - goal.y)
            if miss > th.eps_goal:
                findings.append(BehaviorFinding("plan_failure", last.t, last.t,
                                                {"goal_distance": round(miss, 6), "eps_goal": th.eps_goal}))
            findings += assess_smoothness(series, th.smooth_jerk, th.smooth_yaw_deg)
    return [BehaviorFinding(f.category, f.t_start, f.t_end, f.evidence, node_id) for f in findings]


# -- trigger mining ------------------------------------------------------------

def _items(features) -> set:
    if hasattr(features, "items") and callable(features.items) and not isinstance(features, Mapping):
        return set(features.items())
    if isinstance(features, Mapping):
        return {f"{k}={v}" for k, v in features.items()}
    return set(features)


def lift_association(findings: Mapping[str, Iterable[str]], features: Mapping[str, object],
                     min_support: int = 1) -> list[TriggerAssociation]:
    """Lift of every (feature value, category) pair over the analysed nodes.

    ``features`` defines the node population; ``findings`` maps node ids to
    the categories observed there (absent means none).
    """
    nodes = sorted(features)
    n = len(nodes)
    cats = {nid: set(findings.get(nid, ())) for nid in nodes}
    items = {nid: _items(features[nid]) for nid in nodes}
    with_findings = sum(1 for nid in nodes if cats[nid])
    if with_findings == 0 or with_findings == n:
        raise DegenerateDistribution(f"{with_findings} of {n} nodes have findings; lift needs both kinds")
    n_f = Counter(f for nid in nodes for f in items[nid])
    n_c = Counter(c for nid in nodes for c in cats[nid])
    n_fc = Counter((f, c) for nid in nodes for f in items[nid] for c in cats[nid])
    out = []
    for (f, c), k in n_fc.items():
        if k < min_support:
            continue
        out.append(TriggerAssociation(f, c, k * n / (n_f[f] * n_c[c]), k, n_f[f], n_c[c], n))
    out.sort(key=lambda a: (-a.lift, -a.n_fc, a.feature, a.category))
    return out


# -- tree analysis -------------------------------------------------------------

REPORT_FORMAT = "scenforge.findings/1"
TRIGGER_HEADER = ["feature", "category", "lift", "support", "n_feature", "n_category", "n_nodes"]


def analyze_tree(tree_dir: str | Path, traces_dir: str | Path, thresholds: Optional[OracleThresholds] = None,
                 config: Optional[dict] = None, executor=None) -> tuple[dict, list[TriggerAssociation]]:
    """Classify every traced node of a saved tree and mine triggers.

    Traces are ``node_<id>.jsonl`` with an optional co-timed
    ``node_<id>.signals.jsonl``. Traces for ids missing from the manifest
    are skipped with a warning.
    """
    from .assembly import diff_derivation, feature_vector, load_manifest, node_filename
    from .config import TOOL_VERSION
    from .document import load_document

    th = thresholds or OracleThresholds()
    tree_dir, traces_dir = Path(tree_dir), Path(traces_dir)
    manifest = load_manifest(tree_dir)
    entries = {n["id"]: n for n in manifest["nodes"]}
    if not traces_dir.is_dir():
        raise OracleError(f"traces directory {traces_dir} does not exist")
    trace_ids = []
    for p in sorted(traces_dir.glob("node_*.jsonl")):
        if p.name.endswith(".signals.jsonl"):
            continue
        nid = p.stem[len("node_"):]
        if nid not in entries:
            log.warning("trace %s refers to unknown node %s; skipped", p.name, nid)
            continue
        trace_ids.append(nid)
    from .document import natural_key
    trace_ids.sort(key=natural_key)

    docs: dict = {}

    def doc(nid):
        if nid not in docs:
            docs[nid] = load_document(tree_dir / node_filename(nid))
        return docs[nid]

    def one(nid):
        d = doc(nid)
        sig_path = traces_dir / f"node_{nid}.signals.jsonl"
        sig = load_signal_log(sig_path) if sig_path.exists() else None
        found = classify_behaviors(load_trace(traces_dir / f"node_{nid}.jsonl"), d, signal_log=sig,
                                   thresholds=th, node_id=nid)
        parent = entries[nid]["parent"]
        delta = diff_derivation(doc(parent), d).to_dict() if parent is not None else None
        return nid, found, delta, feature_vector(d, config)

    for nid in trace_ids:  # load documents up front; workers then only read the cache
        doc(nid)
        if entries[nid]["parent"] is not None:
            doc(entries[nid]["parent"])
    results = list(executor.map(one, trace_ids)) if executor is not None else [one(n) for n in trace_ids]

    nodes, per_node, feats = {}, {}, {}
    counts = Counter()
    for nid, found, delta, fv in results:
        cats = sorted({f.category for f in found}, key=CATEGORIES.index)
        counts.update(cats)
        per_node[nid] = cats
        feats[nid] = fv
        nodes[nid] = {"categories": cats, "findings": [f.to_dict() for f in found], "derivation": delta}
    try:
        assoc = lift_association(per_node, feats, th.min_support) if results else []
        note = None
    except DegenerateDistribution as exc:
        assoc, note = [], str(exc)
    report = {"format": REPORT_FORMAT, "tool_version": TOOL_VERSION, "seed": manifest.get("seed"),
              "analyzed": len(results), "counts": {c: counts.get(c, 0) for c in CATEGORIES},
              "nodes": nodes, "triggers": len(assoc)}
    if note:
        report["note"] = note
    return report, assoc
