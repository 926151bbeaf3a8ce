"""Batch runner: ``osp-lab <experiment> [options]``.

Reports go to ``--out`` as ``<name>.csv`` and ``<name>.jsonl`` side by side
plus ``manifest.json``. Nothing time dependent is written, so identical
config and seed give identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_INVALID, EXIT_INCONCLUSIVE, EXIT_INTERNAL = 0, 1, 2, 3

DEFAULTS = {
    "a": 1.02,
    "b": 1 / 128,
    "delta": 0.0,
    "alpha": 1.0,
    "window": 16,
    "K": 20.0,
    "T": 7,
    "omega1": "011111",
    "omega2": "0111111",
    "omega3": "0111",
    "omega4": "01111",
    "audit_delta": 1e-7,
    "periodic_max_period": 8,
    "fiber_grid": 512,
    "max_period": 8,
    "max_core": 4,
    "window_margin": 200,
    "max_fiber_bases": 4096,
    "max_iterations": 0,
    "r_fiber": 0.5,
    "a2_epsilon": 3 / 256,
    "d_sweep": "1/2,1/4,1/8",
    "tail_tol": 1e-15,
    "expansivity_pairs": 1000,
    "holder_samples": 2000,
    "seed": 0,
    "experiment": "",
}


class ConfigError(ValueError):
    pass


def _coerce(key, text):
    proto = DEFAULTS[key]
    try:
        if isinstance(proto, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(proto, int):
            return int(text)
        if isinstance(proto, float):
            if "/" in text:
                n, d = text.split("/")
                return float(n) / float(d)
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return text


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    cfg = dict(DEFAULTS)
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        cfg[key] = _coerce(key, val)
    return cfg


def load_config(arg: str | None) -> dict:
    if arg in (None, "default"):
        return dict(DEFAULTS)
    try:
        return parse_config(Path(arg).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {arg!r}: {exc}") from exc


def validate_config(cfg: dict) -> dict:
    """Period words, the regime conditions; returns the regime report."""
    from .skewprod import check_parameter_regime
    from .symbolic import InvalidInput, check_word, cyclic_class
    words = [cfg[f"omega{i}"] for i in range(1, 5)]
    try:
        for w in words:
            check_word(w)
    except InvalidInput as exc:
        raise ConfigError(str(exc)) from exc
    if len({cyclic_class(w) for w in words}) < 4:
        raise ConfigError("period words must be pairwise cyclically distinct")
    if any(set(w) != {"0", "1"} for w in words):
        raise ConfigError("every period word must contain both symbols")
    T1, T2, T3, T4 = map(len, words)
    if max(T3, T4) > min(T1, T2):
        raise ConfigError("need len(omega3), len(omega4) <= min(len(omega1), len(omega2))")
    if cfg["T"] != max(T1, T2):
        raise ConfigError(f"T must equal max(len(omega1), len(omega2)) = {max(T1, T2)}")
    rep = check_parameter_regime(cfg["a"], cfg["b"], cfg["delta"], cfg["alpha"], cfg["T"],
                                 cfg["K"], cfg["window"])
    if not rep["passed"]:
        bad = [i.name for i in rep["items"] if not i.passed]
        raise ConfigError(f"parameter regime violated: {', '.join(bad)}")
    return rep


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()[:16]


def canonical(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"))


def jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if obj is None or isinstance(obj, (str, int)):
        return obj
    return str(obj)


class Report:
    """Collects tables; each record gets the config hash."""

    def __init__(self, cfg: dict, command: list):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.command = command
        self.tables: dict[str, list] = {}
        self.summary: list[str] = []

    def add(self, table: str, record: dict):
        rec = {"config_hash": self.hash}
        rec.update(jsonable(record))
        self.tables.setdefault(table, []).append(rec)

    def say(self, line: str):
        self.summary.append(line)
        print(line)

    def write(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        import scipy
        from . import __version__
        manifest = {
            "command": self.command,
            "config": jsonable(self.cfg),
            "config_hash": self.hash,
            "seed": self.cfg["seed"],
            "rng": "numpy.random.default_rng(seed)",
            "versions": {"osplab": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "tables": sorted(self.tables),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        for name, rows in self.tables.items():
            with open(out / f"{name}.jsonl", "w") as fh:
                for r in rows:
                    fh.write(json.dumps(r, sort_keys=True) + "\n")
            cols = sorted({k for r in rows for k in r})
            buf = io.StringIO()
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: (json.dumps(v) if isinstance(v, (dict, list)) else v)
                            for k, v in r.items()})
            (out / f"{name}.csv").write_text(buf.getvalue())
        (out / "summary.txt").write_text("\n".join(self.summary) + "\n")


# -- experiments ------------------------------------------------------------

class Inconclusive(RuntimeError):
    pass


def _skew(cfg, delta=None):
    from .skewprod import default_skew
    return default_skew(cfg["a"], cfg["b"], cfg["delta"] if delta is None else delta,
                        cfg["alpha"], cfg["window"], cfg["K"])


def _params(G, cfg):
    from .wordsearch import algo_params
    return algo_params(G, cfg["T"], cfg["max_iterations"] or None)


def _words(cfg):
    return tuple(cfg[f"omega{i}"] for i in range(1, 5))


def _spec(cfg):
    from .shadowing import CandidateSpec
    return CandidateSpec(cfg["max_period"], cfg["max_core"], cfg["fiber_grid"],
                         cfg["window_margin"], True, cfg["max_fiber_bases"])


def exp_regime(rep: Report, args):
    from .skewprod import check_parameter_regime
    cfg = rep.cfg
    r = check_parameter_regime(cfg["a"], cfg["b"], cfg["delta"], cfg["alpha"], cfg["T"],
                               cfg["K"], cfg["window"])
    for it in r["items"]:
        rep.add("regime", {"item": it.name, "lhs": it.lhs, "rhs": it.rhs, "margin": it.margin,
                           "passed": it.passed})
    rep.say(f"regime S={r['S']} N={r['N']} T={r['T']} L={r['L']:.6g} gamma={r['gamma']:.3g}: "
            + ("pass" if r["passed"] else "FAIL"))
    return EXIT_OK if r["passed"] else EXIT_INVALID


def exp_periodic(rep: Report, args):
    from .skewprod import find_periodic_points
    cfg = rep.cfg
    pts = find_periodic_points(_skew(cfg), cfg["periodic_max_period"], cfg["fiber_grid"])
    for p in pts:
        rep.add("periodic_points", {"word": p.word, "fiber": p.fiber, "kind": p.kind,
                                    "derivative": p.derivative})
    kinds = {k: sum(p.kind == k for p in pts) for k in ("type12", "type21")}
    rep.say(f"periodic points up to base period {cfg['periodic_max_period']}: {len(pts)} "
            f"(type12 {kinds['type12']}, type21 {kinds['type21']})")
    return EXIT_OK


def _p3(G, cfg):
    from .shadowing import fixed_fiber
    from .skewprod import ProductPoint
    from .symbolic import BiSeq
    w3, w4 = cfg["omega3"], cfg["omega4"]
    return (ProductPoint(BiSeq.periodic(w3), fixed_fiber(G, w3, "type21")),
            ProductPoint(BiSeq.periodic(w4), fixed_fiber(G, w4, "type12")))


def exp_words(rep: Report, args):
    from .circle import Arc
    from .wordsearch import (build_heteroclinic, build_point_s, lemma8_separate, lemma9_distort,
                             separation_check)
    cfg = rep.cfg
    G = _skew(cfg)
    params = _params(G, cfg)
    which = args.which
    if which == "lemma8":
        res = lemma8_separate(G, args.seed_word, args.phi1, args.phi2, params)
        sp, sm = separation_check(G, res.word, res.nl, args.phi1, args.phi2)
        rep.add("lemma8", {"seed_word": args.seed_word, "phi1": args.phi1, "phi2": args.phi2,
                           "word": res.word, "nl": res.nl, "nr": res.nr,
                           "iterations": res.iterations, "M_plus": res.M_plus,
                           "M_minus": res.M_minus, "recheck_plus": sp, "recheck_minus": sm})
        for rec in res.log:
            rep.add("lemma8_log", rec)
        rep.say(f"separated after {res.iterations} iterations: |word|={len(res.word)} "
                f"M+={res.M_plus:.4g} M-={res.M_minus:.4g}")
        return EXIT_OK
    if which == "lemma9":
        lo, hi = args.phi1, args.phi2
        J = Arc(lo, (hi - lo) % 1.0)
        res = lemma9_distort(G, args.seed_word, J, params)
        rep.add("lemma9", {"seed_word": args.seed_word, "J_start": J.start, "J_length": J.length,
                           "word_minus": res.word_minus, "nl_minus": res.nl_minus,
                           "word_plus": res.word_plus, "nl_plus": res.nl_plus})
        rep.say(f"distortion words: |w-|={len(res.word_minus)} |w+|={len(res.word_plus)}")
        return EXIT_OK
    p3, p4 = _p3(G, cfg)
    d = args.d if args.d is not None else cfg["a2_epsilon"] / 6
    avoid = (cfg["omega1"], cfg["omega2"])
    s = build_point_s(G, p3, d, params, avoid)
    rep.add("point_s", {"d": d, "word_length": len(s.word), "nl": s.nl, "m": s.m, "kind": s.kind,
                        "fiber": s.point.fiber, "derivative": s.derivative, "checks": s.checks})
    rep.say(f"s: period {len(s.word)}, {s.kind}, fiber {s.point.fiber:.12g}")
    if which == "heteroclinic":
        h = build_heteroclinic(G, s, p4, params, avoid)
        rep.add("heteroclinic", {"Kbar": h.Kbar, "k": h.k, "fiber": h.y.fiber,
                                 "certificates": h.certificates})
        rep.say(f"heteroclinic: Kbar={h.Kbar} k={h.k} fiber {h.y.fiber:.12g}")
        ok = h.certificates["forward_ok"] and h.certificates["backward_ok"]
        return EXIT_OK if ok else EXIT_INVALID
    return EXIT_OK


def _fractions(text):
    out = []
    for part in text.split(","):
        n, _, d = part.strip().partition("/")
        out.append(float(n) / float(d) if d else float(n))
    return out


def _xi_tables(rep: Report, name: str, xi):
    for k, ref, fib, tag, jump in xi.records():
        rep.add(name, {"k": k, "base": ref, "fiber": fib, "segment": tag, "jump": jump})
    for i, tag, lo, hi, off, enc in xi.segment_table():
        rep.add(name + "_segments", {"segment": i, "tag": tag, "lo": lo, "hi": hi, "offset": off,
                                     "base": enc})


def _epsilon_a1(rep, setup, args):
    from .shadowing import auto_epsilon_a1
    if args.epsilon in (None, "auto"):
        E = auto_epsilon_a1(setup)
        rec = {k: v for k, v in E.items() if k not in ("fiber_r1", "shift_r1", "shift_r2")}
        for k in ("fiber_r1", "shift_r1", "shift_r2"):
            c = E[k]
            rec[k] = {"eps": c.eps, "eps1": c.eps1, "eps2": c.eps2, "eps3": c.eps3, "n": c.n, "m": c.m}
        rep.add("epsilon_a1", rec)
        rep.say(f"auto epsilon {E['eps']:.6g} (eps0 {E['eps0']:.6g}, transit {E['transit']})")
        return E["eps"]
    return float(args.epsilon)


def _verdict(rep: Report, table: str, v, extra: dict):
    rec = dict(extra)
    rec.update(shadowed=v.shadowed, inconclusive=v.inconclusive, epsilon=v.epsilon, radius=v.radius,
               witness=v.witness, witness_gap=v.witness_gap, min_margin=v.min_margin,
               min_margin_kind=v.min_margin_kind, stage_margins=v.stage_margins,
               seeded_gaps=v.seeded_gaps, counts=v.counts,
               consistent=[list(c) for c in v.consistent],
               consistent_on_reference_orbit=v.consistent_on_reference_orbit,
               window=list(v.window), window_margin=v.margin)
    rep.add(table, rec)
    rep.say(f"  shadowed={str(v.shadowed).lower()} inconclusive={str(v.inconclusive).lower()} "
            f"min margin {v.min_margin:.3g} ({v.min_margin_kind}); consistent candidates "
            f"{len(v.consistent)}, all on the reference orbit: {v.consistent_on_reference_orbit}")


def _status(verdicts):
    if any(v.inconclusive for v in verdicts):
        return EXIT_INCONCLUSIVE
    if not all(v.consistent_on_reference_orbit for v in verdicts):
        raise AssertionError("a shadow-consistent candidate off the orbit of the reference point")
    return EXIT_OK


def exp_a1(rep: Report, args, search: bool):
    from .shadowing import a1_setup, build_xi_a1, osp_search, validate_pseudo
    cfg = rep.cfg
    G = _skew(cfg)
    setup = a1_setup(G)
    rep.add("a1_setup", {"r1_word": setup.r1_word, "r1_fiber": setup.r1_fiber,
                         "r2_word": setup.r2_word, "r2_fiber": setup.r2_fiber,
                         "certificates": setup.certificates})
    eps = _epsilon_a1(rep, setup, args)
    verdicts = []
    for frac in _fractions(cfg["d_sweep"]):
        d = eps * frac
        xi = build_xi_a1(setup, d, tail_tol=cfg["tail_tol"])
        ok, gap = validate_pseudo(G, xi, d)
        rep.say(f"A1 d={d:.6g}: {len(xi)} points, k1={xi.meta['k1']} k2={xi.meta['k2']}, "
                f"max jump {gap:.3g}, valid={ok}")
        if not ok:
            raise AssertionError(f"A1 construction is not a d-pseudotrajectory (gap {gap})")
        if not search:
            _xi_tables(rep, f"xi_a1_d{len(verdicts)}", xi)
            verdicts.append(None)
            continue
        v = osp_search(G, xi, eps, _spec(cfg), jobs=args.jobs, r_fiber=cfg["r_fiber"])
        _verdict(rep, "shadow_a1", v, {"d": d, "len": len(xi), "k1": xi.meta["k1"],
                                       "k2": xi.meta["k2"], "max_jump": gap})
        verdicts.append(v)
    return _status(verdicts) if search else EXIT_OK


def exp_a2(rep: Report, args, search: bool):
    from .shadowing import a2_setup, build_xi_a2, osp_search, validate_pseudo
    from .wordsearch import build_heteroclinic, build_point_s
    cfg = rep.cfg
    G = _skew(cfg)
    params = _params(G, cfg)
    setup = a2_setup(G, _words(cfg))
    eps = cfg["a2_epsilon"] if args.epsilon in (None, "auto") else float(args.epsilon)
    d = eps / 2
    avoid = (cfg["omega1"], cfg["omega2"])
    s = build_point_s(G, setup.p[2], d / 3, params, avoid)
    het = build_heteroclinic(G, s, setup.p[3], params, avoid)
    xi = build_xi_a2(setup, s, het, d)
    ok, gap = validate_pseudo(G, xi, d)
    m = xi.meta
    rep.add("a2_construction", {"epsilon": eps, "d": d, "s_period": len(s.word), "s_kind": s.kind,
                                "Kbar": het.Kbar, "k1": m["k1"], "k2": m["k2"], "k3": m["k3"],
                                "k4": m["k4"], "len": len(xi), "max_jump": gap, "valid": ok,
                                "setup": setup.certificates, "heteroclinic": het.certificates})
    rep.say(f"A2 eps={eps:.6g} d={d:.6g}: s period {len(s.word)}, Kbar {het.Kbar}, "
            f"{len(xi)} points, max jump {gap:.3g}, valid={ok}")
    if not ok:
        raise AssertionError(f"A2 construction is not a d-pseudotrajectory (gap {gap})")
    if not search:
        _xi_tables(rep, "xi_a2", xi)
        return EXIT_OK
    v = osp_search(G, xi, eps, _spec(cfg), jobs=args.jobs, r_fiber=cfg["r_fiber"])
    _verdict(rep, "shadow_a2", v, {"d": d, "len": len(xi)})
    return _status([v])


def exp_audit(rep: Report, args):
    from .shadowing import expansivity_check
    from .skewprod import gamma_bound, holder_and_lipschitz_audit
    cfg = rep.cfg
    which = args.which
    if which == "expansivity":
        ok = expansivity_check(cfg["expansivity_pairs"], seed=cfg["seed"])
        rep.add("audit_expansivity", {"pairs": cfg["expansivity_pairs"], "R": 0.5, "passed": ok})
        rep.say(f"expansivity with R=1/2 over {cfg['expansivity_pairs']} pairs: {ok}")
        return EXIT_OK if ok else EXIT_INVALID
    G = _skew(cfg, delta=cfg["audit_delta"])
    if which == "holder":
        L, C, ok = holder_and_lipschitz_audit(G, cfg["holder_samples"], cfg["seed"])
        rep.add("audit_holder", {"delta": G.delta, "L_est": L, "C_est": C,
                                 "two_to_alpha": 2 ** G.alpha, "passed": ok})
        rep.say(f"Lipschitz estimate {L:.6g} < 2^alpha: {ok}; Holder estimate {C:.4g}")
        return EXIT_OK if ok else EXIT_INVALID
    L = G.lipschitz_bound()
    g = gamma_bound(G.delta, G.K, L, G.alpha)
    ok = g < G.b / 40
    rep.add("audit_gamma", {"delta": G.delta, "K": G.K, "L": L, "gamma": g, "b_over_40": G.b / 40,
                            "passed": ok})
    rep.say(f"gamma {g:.4g} < b/40 = {G.b / 40:.4g}: {ok}")
    return EXIT_OK if ok else EXIT_INVALID


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="default", help="config file or 'default'")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--out", default="osp-out", help="report directory")
    common.add_argument("--jobs", type=int, default=1)
    p = argparse.ArgumentParser(prog="osp-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    sub.add_parser("regime-check", parents=[common])
    sub.add_parser("periodic-points", parents=[common])
    w = sub.add_parser("words", parents=[common])
    w.add_argument("which", choices=["lemma8", "lemma9", "build-s", "heteroclinic"])
    w.add_argument("--seed-word", default="1")
    w.add_argument("--phi1", type=float, default=0.1)
    w.add_argument("--phi2", type=float, default=0.2)
    w.add_argument("--d", type=float, default=None)
    ps = sub.add_parser("pseudo", parents=[common])
    ps.add_argument("which", choices=["a1", "a2"])
    ps.add_argument("--epsilon", default="auto")
    for name in ("shadow-a1", "shadow-a2"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--epsilon", default="auto")
    au = sub.add_parser("audit", parents=[common])
    au.add_argument("which", choices=["holder", "gamma", "expansivity"])
    return p


def run(argv=None) -> int:
    from .circle import InvalidParameter
    from .shadowing import DegenerateInput
    from .skewprod import InvalidRegime, NotPeriodic
    from .symbolic import InvalidInput
    from .wordsearch import ConstructionFailure, NonTermination
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        cfg["experiment"] = " ".join([args.cmd] + ([args.which] if hasattr(args, "which") else []))
        validate_config(cfg)
    except (ConfigError, InvalidRegime, InvalidParameter) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rep = Report(cfg, [args.cmd] + ([args.which] if hasattr(args, "which") else []))
    try:
        if args.cmd == "regime-check":
            code = exp_regime(rep, args)
        elif args.cmd == "periodic-points":
            code = exp_periodic(rep, args)
        elif args.cmd == "words":
            code = exp_words(rep, args)
        elif args.cmd == "pseudo":
            code = (exp_a1 if args.which == "a1" else exp_a2)(rep, args, search=False)
        elif args.cmd == "shadow-a1":
            code = exp_a1(rep, args, search=True)
        elif args.cmd == "shadow-a2":
            code = exp_a2(rep, args, search=True)
        else:
            code = exp_audit(rep, args)
    except (NonTermination, Inconclusive) as exc:
        rep.say(f"inconclusive at budget: {exc}")
        code = EXIT_INCONCLUSIVE
    except (InvalidInput, InvalidRegime, InvalidParameter, DegenerateInput, NotPeriodic,
            ConstructionFailure, ValueError) as exc:
        rep.say(f"validation error: {exc}")
        code = EXIT_INVALID
    except AssertionError as exc:
        rep.say(f"internal assertion failed: {exc}")
        code = EXIT_INTERNAL
    rep.write(Path(args.out))
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
