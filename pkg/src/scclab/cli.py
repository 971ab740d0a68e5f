"""Batch experiment runner: INI config in, CSV/JSON reports out."""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .presentations import CAYLEY, DSLError, SpaceSpec, parse_space_spec, power
from .spaces import BallCache, CayleyMetric, InsufficientRadius, build_ball, dead_end_depth, separated_net
from .wordproblem import WordProblemError, make_scheme, nf_geodesic, validate_scheme, _base_relators

log = logging.getLogger("scclab")

ANALYSES = ("growth", "contracting", "extension", "barriers", "concave", "tightness", "semigroup",
            "density", "deadend")

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 2, 3


class ConfigError(ValueError):
    def __init__(self, field_name, msg):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    space_text: str
    space: SpaceSpec
    radius: int
    analyses: list
    params: dict
    schemes: list = field(default_factory=list)
    cache: Path | None = None
    out: Path = Path("out")
    source: str = ""

    @property
    def digest(self) -> str:
        blob = json.dumps({"space": self.space.text, "radius": self.radius, "analyses": self.analyses,
                           "params": self.params, "schemes": self.schemes}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def scheme(self):
        return make_scheme(self.schemes, self.space.group.rank) if self.schemes else None


# ---------------------------------------------------------------- configuration

def _read_space(value: str, base: Path, field_name: str) -> str:
    p = (base / value) if not Path(value).is_absolute() else Path(value)
    if p.is_file():
        return p.read_text()
    if "space" in value:
        return value
    raise ConfigError(field_name, f"space file {value!r} does not exist")


def _int(sec, key, default=None, field_name=None):
    raw = sec.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(field_name or key, "missing")
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(field_name or key, f"expected an integer, got {raw!r}") from None


def _parse_targets(text, field_name):
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            out.append([[int(x) for x in img.split()] for img in part.split("|")])
        except ValueError:
            raise ConfigError(field_name, f"bad permutation list {part!r}") from None
    return out


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"{path} does not exist")
    cp = configparser.ConfigParser()
    cp.read_string(path.read_text())
    return config_from_parser(cp, path.parent, overrides)


def config_from_parser(cp: configparser.ConfigParser, base: Path, overrides=None) -> ExperimentConfig:
    overrides = overrides or {}
    if not cp.has_section("experiment"):
        cp.add_section("experiment")
    ex = cp["experiment"]
    for k, v in overrides.get("experiment", {}).items():
        ex[k] = str(v)
    if "space" not in ex:
        raise ConfigError("experiment.space", "missing")
    text = _read_space(ex["space"], base, "experiment.space")
    try:
        space = parse_space_spec(text)
    except DSLError as exc:
        raise ConfigError("experiment.space", str(exc)) from None
    radius = _int(ex, "radius", field_name="experiment.radius")
    if radius < 0:
        raise ConfigError("experiment.radius", "must be non-negative")
    analyses = [a.strip() for a in ex.get("analyses", "").split(",") if a.strip()]
    for a in analyses:
        if a not in ANALYSES:
            raise ConfigError("experiment.analyses", f"unknown analysis {a!r}")
    params = {}
    for a in ANALYSES:
        sec = dict(cp[a]) if cp.has_section(a) else {}
        sec.update({k: str(v) for k, v in overrides.get(a, {}).items()})
        if a in analyses or sec:
            params[a] = sec
    schemes = []
    if cp.has_section("fingerprint"):
        for key in sorted(cp["fingerprint"]):
            schemes += _parse_targets(cp["fingerprint"][key], f"fingerprint.{key}")
    cache = ex.get("cache")
    cfg = ExperimentConfig(text, space, radius, analyses, params, schemes,
                           Path(base / cache) if cache else None, Path(base / ex.get("out", "out")))
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Budget and syntax checks; nothing heavy runs before these pass."""
    R = cfg.radius
    spec = cfg.space.group
    if cfg.schemes:
        try:
            sch = cfg.scheme
            rels = list(cfg.space.normal) + _base_relators(spec)
            validate_scheme(sch, rels)
        except WordProblemError as exc:
            raise ConfigError("fingerprint", str(exc)) from None

    def word(a, key, default):
        raw = cfg.params[a].get(key, default)
        try:
            return spec.word(raw)
        except DSLError as exc:
            raise ConfigError(f"{a}.{key}", str(exc)) from None

    for a in cfg.analyses:
        p = cfg.params.setdefault(a, {})
        get = lambda k, d=None, a=a, p=p: _int(p, k, d, f"{a}.{k}")
        if a == "growth":
            if get("delta", 0) > R:
                raise ConfigError("growth.delta", f"exceeds radius {R}")
        elif a == "barriers":
            n, delta, M, eps = get("n", R), get("delta", 0), get("m", 0), get("eps", 0)
            if n > R:
                raise ConfigError("barriers.n", f"n={n} exceeds radius {R}")
            if n + delta + M > R:
                raise ConfigError("barriers.n", f"n+delta+M={n + delta + M} exceeds radius {R}")
            word(a, "g", "a")
        elif a == "concave":
            m1, m2 = get("m1", 1), get("m2", 1)
            if m1 > m2:
                raise ConfigError("concave.m1", f"M1={m1} exceeds M2={m2}")
            n = get("n", R - m2)
            if n > R:
                raise ConfigError("concave.n", f"n={n} exceeds radius {R}")
            if n + get("delta", 0) + m2 > R:
                raise ConfigError("concave.n", f"n+delta+M2 exceeds radius {R}")
        elif a == "density":
            if get("radius", min(R, 4)) > R:
                raise ConfigError("density.radius", f"exceeds radius {R}")
        elif a == "deadend":
            if get("slack", 2) >= R:
                raise ConfigError("deadend.slack", f"must be below radius {R}")
        elif a == "semigroup":
            raw = p.get("targets", "0.3")
            try:
                ts = [float(x) for x in raw.split(",")]
            except ValueError:
                raise ConfigError("semigroup.targets", f"bad list {raw!r}") from None
            if any(t <= 0 for t in ts):
                raise ConfigError("semigroup.targets", "targets must be positive")
        elif a == "contracting":
            word(a, "element", "a")
        elif a == "extension":
            for w in p.get("elements", "a,b,ab").split(","):
                try:
                    spec.word(w.strip())
                except DSLError as exc:
                    raise ConfigError("extension.elements", str(exc)) from None
        elif a == "tightness":
            sub = p.get("sub", "barriers")
            if not (sub == "barriers" or sub.startswith("subgroup:") or sub.startswith("quotient:")):
                raise ConfigError("tightness.sub", f"unknown subset {sub!r}")


# ---------------------------------------------------------------- analyses

class Context:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.cache = BallCache(cfg.cache, _scheme_tag(cfg)) if cfg.cache else None
        self._balls = {}

    def ball(self, space=None, radius=None):
        space = space or self.cfg.space
        radius = self.cfg.radius if radius is None else radius
        key = (space.text, radius)
        if key not in self._balls:
            build = lambda: build_ball(space, radius, scheme=self.cfg.scheme)
            self._balls[key] = self.cache.get_or_build(space, radius, build) if self.cache else build()
        return self._balls[key]


def _scheme_tag(cfg):
    return json.dumps(cfg.schemes, sort_keys=True) if cfg.schemes else ""


def _series_csv(series) -> str:
    return series.to_csv()


def _estimate(series):
    from .growth import critical_exponent
    try:
        return critical_exponent(series).to_dict()
    except ValueError as exc:
        return {"error": str(exc)}


def _num(p, key, default):
    return int(p.get(key, default))


def run_growth(ctx, p):
    from .growth import count_series, fekete_limit, minimal_fekete_k
    ball = ctx.ball()
    s = count_series(ball, None, _num(p, "delta", 0))
    out = {"series": list(s.counts), "exponent": _estimate(s)}
    try:
        k = minimal_fekete_k(s)
        out["fekete"] = {"k": k, **fekete_limit(s, k).to_dict()}
    except ValueError as exc:
        out["fekete"] = {"error": str(exc)}
    return out, {"series": _series_csv(s)}


def run_contracting(ctx, p):
    from .contracting import is_contracting_element
    spec = ctx.cfg.space.group
    h = spec.word(p.get("element", "a"))
    cert = is_contracting_element(spec, h, ctx.cfg.radius, ball=ctx.ball())
    return {"element": spec.show(h), "certificate": json.loads(cert.to_json())}, {}


def run_extension(ctx, p):
    from .extension import calibrate_system, extension_collisions
    spec = ctx.cfg.space.group
    hs = [spec.word(w.strip()) for w in p.get("elements", "a,b,ab").split(",")]
    sys_ = calibrate_system(spec, hs, radius=min(ctx.cfg.radius, _num(p, "calibration_radius", 6)),
                            seed=_num(p, "seed", 0))
    ball = ctx.ball()
    r = min(_num(p, "alphabet_radius", 5), ctx.cfg.radius - sys_.tau - 1)
    Z = separated_net(ball.sphere(r), sys_.tau + 1, ball)
    A = [ball.word(z) for z in Z[:_num(p, "alphabet", 20)]]
    count, coll = extension_collisions(sys_, A, _num(p, "length", 3))
    return {"system": sys_.to_dict(), "alphabet": [spec.show(a) for a in A], "words": count,
            "collisions": len(coll)}, {"system": sys_.to_json() + "\n"}


def _metric_for(ctx):
    sp = ctx.cfg.space
    if sp.kind == CAYLEY and nf_geodesic(sp.group):
        return CayleyMetric(sp.group)
    return ctx.ball()


def _barrier_series(ctx, p):
    from .extension import barrier_free_set
    spec = ctx.cfg.space.group
    n = _num(p, "n", ctx.cfg.radius)
    return barrier_free_set(_metric_for(ctx), _num(p, "eps", 0), _num(p, "m", 0), spec.word(p.get("g", "a")),
                            n, _num(p, "delta", 0), oriented=p.get("oriented", "true") != "false")


def run_barriers(ctx, p):
    from .growth import count_series, tightness_report
    res = _barrier_series(ctx, p)
    out = {"series": list(res.series.counts), "exponent": _estimate(res.series)}
    amb = count_series(ctx.ball(), None, res.series.delta, n_max=len(res.series) - 1)
    try:
        t = tightness_report(res.series, amb)
        out["tightness"] = {"gap": t.gap, "lo": t.lo, "hi": t.hi, "verdict": t.verdict}
    except ValueError as exc:
        out["tightness"] = {"error": str(exc)}
    return out, {"series": _series_csv(res.series)}


def run_concave(ctx, p):
    from .extension import concave_region
    ball = ctx.ball()
    m2 = _num(p, "m2", 1)
    n = _num(p, "n", ball.radius - m2)
    res = concave_region(ball, _num(p, "m1", 1), m2, n, _num(p, "delta", 0))
    spec = ctx.cfg.space.group
    return {"series": list(res.series.counts), "elements": [spec.show(w) for w in res.elements],
            "inexact_pairs": res.params["inexact_pairs"]}, {"series": _series_csv(res.series)}


def run_tightness(ctx, p):
    from .growth import count_series, tightness_report
    sub = p.get("sub", "barriers")
    cfg = ctx.cfg
    delta = _num(p, "delta", 0)
    if sub == "barriers":
        ss = _barrier_series(ctx, cfg.params.get("barriers", {})).series
        amb = count_series(ctx.ball(), None, ss.delta, n_max=len(ss) - 1)
    elif sub.startswith("subgroup:"):
        ball = ctx.ball()
        h = cfg.space.group.word(sub.split(":", 1)[1])
        ids = set()
        for sgn in (1, -1):
            for k in range(4 * ball.radius + 4):
                try:
                    ids.add(ball.vertex(power(h, sgn * k)))
                except InsufficientRadius:
                    break
        ss = count_series(ball, ids, delta)
        amb = count_series(ball, None, delta)
    else:
        text = _read_space(sub.split(":", 1)[1], Path("."), "tightness.sub")
        q = parse_space_spec(text, cfg.space.groups)
        ss = count_series(ctx.ball(q), None, delta)
        amb = count_series(ctx.ball(), None, delta)
    t = tightness_report(ss, amb)
    return {"sub": list(ss.counts), "ambient": list(amb.counts), "gap": t.gap, "lo": t.lo, "hi": t.hi,
            "verdict": t.verdict}, {"sub": _series_csv(ss)}


def run_semigroup(ctx, p):
    from .extension import build_free_semigroup, calibrate_system
    from .growth import count_series, critical_exponent
    spec = ctx.cfg.space.group
    hs = [spec.word(w.strip()) for w in p.get("elements", "a,b,ab").split(",")]
    sys_ = calibrate_system(spec, hs, radius=min(ctx.cfg.radius, 6))
    ball = ctx.ball()
    amb = critical_exponent(count_series(ball, None, 0)).estimate
    levels = []
    for t in [float(x) for x in p.get("targets", "0.3").split(",")]:
        b = build_free_semigroup(sys_, ball, t, delta=_num(p, "delta", 1), omega_ambient=amb)
        levels.append(b.summary())
    return {"system": sys_.to_dict(), "levels": levels}, {}


def run_density(ctx, p):
    from .growth import positive_density
    r = _num(p, "radius", min(ctx.cfg.radius, 4))
    rep = positive_density(ctx.cfg.space.group, r, _num(p, "cert_radius", r))
    return {"certified": rep.certified, "refuted": rep.refuted, "undecided": rep.undecided,
            "total": rep.total, "density": rep.density}, {}


def run_deadend(ctx, p):
    ball = ctx.ball()
    slack = _num(p, "slack", 2)
    words = [w.strip() for w in p.get("vertices", "").split(",") if w.strip()]
    spec = ctx.cfg.space.group
    ids = [ball.vertex(spec.word(w)) for w in words] if words else \
        [int(v) for v in ball.orbit_ids() if ball.dist0[v] <= max(0, ball.radius - slack - 2)]
    depths = {}
    for v in ids:
        try:
            depths[ball.label(v) or "1"] = dead_end_depth(ball, v, slack)
        except ValueError as exc:
            depths[ball.label(v) or "1"] = str(exc)
    nums = [d for d in depths.values() if isinstance(d, int)]
    return {"depths": depths, "max": max(nums) if nums else None}, {}


RUNNERS = {"growth": run_growth, "contracting": run_contracting, "extension": run_extension,
           "barriers": run_barriers, "concave": run_concave, "tightness": run_tightness,
           "semigroup": run_semigroup, "density": run_density, "deadend": run_deadend}


def _dump(obj) -> str:
    def clean(x):
        if isinstance(x, float):
            return None if math.isnan(x) else x
        if isinstance(x, dict):
            return {str(k): clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if hasattr(x, "item"):
            return x.item()
        return x
    return json.dumps(clean(obj), sort_keys=True, indent=1) + "\n"


def run_experiment(cfg: ExperimentConfig | str | Path, out: Path | None = None, jobs: int = 1) -> dict:
    """Run every configured analysis; failures are recorded per analysis."""
    if not isinstance(cfg, ExperimentConfig):
        cfg = load_config(cfg)
    out = Path(out or cfg.out) / cfg.digest[:16]
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg)
    ctx.ball()

    def one(name):
        try:
            rep, files = RUNNERS[name](ctx, cfg.params.get(name, {}))
            return name, {"status": "ok", **rep}, files
        except Exception as exc:  # isolate: siblings still report
            log.debug("analysis %s failed\n%s", name, traceback.format_exc())
            return name, {"status": "error", "error": f"{type(exc).__name__}: {exc}"}, {}

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(one, cfg.analyses))
    else:
        results = [one(a) for a in cfg.analyses]
    bundle = {}
    for name, rep, files in sorted(results, key=lambda r: r[0]):
        rep = {"analysis": name, "config_digest": cfg.digest, "params": cfg.params.get(name, {}),
               "space": cfg.space.text, "radius": cfg.radius, **rep}
        (out / f"{name}.json").write_text(_dump(rep))
        for suffix, text in files.items():
            ext = "csv" if text.startswith("n,") else "json"
            (out / f"{name}.{suffix}.{ext}").write_text(text)
        bundle[name] = rep
    return {"out": str(out), "reports": bundle}


# ---------------------------------------------------------------- command line

def _parser():
    ap = argparse.ArgumentParser(prog="scclab", description="Growth and contraction experiments on finite models.")
    ap.add_argument("--config", help="INI experiment file")
    ap.add_argument("--out", help="report directory")
    ap.add_argument("--cache", help="ball cache directory")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--space", help="space DSL file or inline text")
    common.add_argument("--radius", type=int)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run every analysis in the config")
    sub.add_parser("ball", parents=[common], help="build (and cache) a ball")
    g = sub.add_parser("growth", parents=[common])
    g.add_argument("--delta", type=int)
    b = sub.add_parser("barriers", parents=[common])
    b.add_argument("--eps", type=int)
    b.add_argument("--bigm", type=int)
    b.add_argument("--word")
    b.add_argument("--n", type=int)
    c = sub.add_parser("concave", parents=[common])
    c.add_argument("--m1", type=int)
    c.add_argument("--m2", type=int)
    c.add_argument("--n", type=int)
    s = sub.add_parser("semigroup", parents=[common])
    s.add_argument("--target")
    t = sub.add_parser("tightness", parents=[common])
    t.add_argument("--sub")
    sub.add_parser("density", parents=[common]).add_argument("--density-radius", type=int)
    sub.add_parser("deadend", parents=[common]).add_argument("--vertices")
    ca = sub.add_parser("cache")
    ca.add_argument("action", choices=["list", "verify", "clear"])
    return ap


_FLAGS = {"delta": "delta", "eps": "eps", "bigm": "m", "word": "g", "n": "n", "m1": "m1", "m2": "m2",
          "target": "targets", "sub": "sub", "density_radius": "radius", "vertices": "vertices"}


def _overrides(args):
    ov = {"experiment": {}}
    if args.space:
        p = Path(args.space)
        ov["experiment"]["space"] = str(p.resolve()) if p.is_file() else args.space
    if args.radius is not None:
        ov["experiment"]["radius"] = args.radius
    if args.command not in ("run", "ball"):
        ov["experiment"]["analyses"] = args.command
        ov[args.command] = {}
        for attr, key in _FLAGS.items():
            v = getattr(args, attr, None)
            if v is not None:
                ov[args.command][key] = v
    elif args.command == "ball":
        ov["experiment"]["analyses"] = ""
    if args.cache:
        ov["experiment"]["cache"] = str(Path(args.cache).resolve())
    return ov


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "cache":
        if not args.cache:
            print("error: cache: --cache is required", file=sys.stderr)
            return EXIT_INVALID
        cache = BallCache(Path(args.cache))
        if args.action == "list":
            rows = cache.list()
            print("key\tradius\tvertices\tbytes")
            for r in rows:
                print("\t".join(str(r.get(k, r.get("error", ""))) for k in ("key", "radius", "vertices", "bytes")))
            return EXIT_OK
        if args.action == "verify":
            bad = cache.verify()
            for k, msg in sorted(bad.items()):
                print(f"corrupt\t{k}\t{msg}")
            if not bad:
                print(f"ok\t{len(cache.entries())} entries")
            return EXIT_PARTIAL if bad else EXIT_OK
        print(f"removed\t{cache.clear()}")
        return EXIT_OK
    try:
        ov = _overrides(args)
        if args.config:
            cfg = load_config(args.config, ov)
        else:
            cp = configparser.ConfigParser()
            cfg = config_from_parser(cp, Path.cwd(), ov)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        cfg.out = Path(args.out)
    if args.command == "ball":
        ctx = Context(cfg)
        ball = ctx.ball()
        print(_dump({"space": cfg.space.text, "radius": cfg.radius, "vertices": ball.n,
                     "layers": ball.layer_sizes().tolist(), "oracle": ball.info.get("oracle")}), end="")
        return EXIT_OK
    bundle = run_experiment(cfg, jobs=args.jobs)
    failed = [k for k, r in bundle["reports"].items() if r["status"] != "ok"]
    for k, r in sorted(bundle["reports"].items()):
        print(f"{k}\t{r['status']}" + (f"\t{r['error']}" if r["status"] != "ok" else ""))
    print(f"reports\t{bundle['out']}")
    return EXIT_PARTIAL if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
