"""Command line entry point: ``pspc {demo,run,simulate,audit}``.

Exit codes: 0 success, 1 verification or audit failure, 2 config error.
Settings come from flags or a JSON file given with ``--config``; flags win.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import audit, latency
from .gfmat import DEFAULT_PRIME, FieldError, FieldMatrix, PrimeField, matmul
from .polycode import CodeError, CodeParams
from .protocol import run_job, replay

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    q: int = DEFAULT_PRIME
    m: int = 2
    n: int = 3
    M: int = 4
    N: int = 12
    D: int = 1
    r: int = 6
    s: int = 4
    t: int = 4
    mu: float = 0.1
    gamma: float = 0.1
    trials: int = 100_000
    seed: int = 0
    out: str | None = None
    preset: str | None = None
    samples: int = 10_000
    threads: int = 1
    allow_zero_point: bool = False
    Ks: list | None = None
    mus: list | None = None

    def code_params(self) -> CodeParams:
        try:
            return CodeParams(PrimeField(self.q), self.m, self.n, self.M, self.N, self.D,
                              self.r, self.s, self.t)
        except (CodeError, FieldError) as exc:
            raise ConfigError(str(exc)) from None

    def latency_params(self) -> latency.LatencyParams:
        try:
            return latency.LatencyParams(self.mu, self.gamma, self.N, self.trials, self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


PRESETS = {
    "demo": {"m": 2, "n": 3, "M": 2, "N": 12, "D": 1, "r": 4, "s": 3, "t": 4},
    "fig2": {"N": 12, "M": 4, "n": 2, "mu": 0.1, "gamma": 0.1, "Ks": [4, 6, 8, 10]},
    "fig3": {"N": 12, "M": 4, "n": 2, "m": 1, "gamma": 1.0,
             "mus": [float(v) for v in np.logspace(-1, 1, 9)]},
}


def _csv_list(kind):
    def parse(text):
        return [kind(v) for v in text.split(",") if v.strip()]
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with any of the flag settings")
    for name, kind in (("q", int), ("m", int), ("n", int), ("M", int), ("N", int),
                       ("D", int), ("r", int), ("s", int), ("t", int), ("mu", float),
                       ("gamma", float), ("trials", int), ("seed", int), ("samples", int),
                       ("threads", int)):
        common.add_argument(f"--{name}", type=kind, default=None)
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--preset", choices=sorted(PRESETS), default=None)
    common.add_argument("--Ks", type=_csv_list(int), default=None,
                        help="comma-separated K sweep for simulate")
    common.add_argument("--mus", type=_csv_list(float), default=None,
                        help="comma-separated mu sweep for simulate")
    common.add_argument("--allow-zero-point", action="store_true", default=None,
                        dest="allow_zero_point",
                        help="inject the forbidden x = 0 into the masking audit")

    parser = argparse.ArgumentParser(prog="pspc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("demo", parents=[common], help="walk through the 12-worker example")
    sub.add_parser("run", parents=[common], help="run one full job and write its transcript")
    sub.add_parser("simulate", parents=[common], help="latency sweeps as CSV")
    sub.add_parser("audit", parents=[common], help="privacy and security audit as JSON")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    settings: dict = {}
    preset = args.preset
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        preset = preset or loaded.get("preset")
        settings.update(loaded)
    if args.command == "demo" and preset is None:
        preset = "demo"
    base = dict(PRESETS.get(preset, {})) if preset else {}
    if preset and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    base.update(settings)
    known = {f.name for f in fields(ExperimentConfig)}
    for name in known:
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    base["preset"] = preset
    unknown = set(base) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**base)


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _random_inputs(params: CodeParams, seed: int):
    rng = np.random.default_rng([seed, 1])
    A = FieldMatrix.random(params.field, params.r, params.s, rng)
    library = [FieldMatrix.random(params.field, params.s, params.t, rng) for _ in range(params.M)]
    return A, library


def _coefficient_roles(params: CodeParams) -> list[str]:
    roles = []
    for l in range(params.K):
        if l < params.m:
            roles.append(f"A_{l} x (undesired library sum)")
        elif l == params.m:
            roles.append("R x (undesired library sum)")
        else:
            p, u = divmod(l, params.m + 1)
            roles.append(f"A_{u} B_D,{p}" if u < params.m else f"R B_D,{p}")
    return roles


def cmd_demo(cfg: ExperimentConfig) -> int:
    params = cfg.code_params()
    A, library = _random_inputs(params, cfg.seed)
    transcript = run_job(params, A, library, cfg.seed, mu=cfg.mu, gamma=cfg.gamma,
                         threads=cfg.threads)
    print(f"field GF({params.field.q}), m={params.m}, n={params.n}, M={params.M}, "
          f"N={params.N}, D={params.D}")
    print(f"recovery threshold K = n(m+1) = {params.K}")
    print("product polynomial coefficients:")
    desired = set(params.desired_indices())
    for l, role in enumerate(_coefficient_roles(params)):
        tag = "product block" if l in desired else "discarded"
        print(f"  Z_{l:<3d} {role:<34s} {tag}")
    if transcript.decoded is None:
        print(f"decode failed: {transcript.failure}")
    else:
        print(f"decoded from workers {list(transcript.used_workers)} "
              f"at t={transcript.decode_time:.4f}")
    print(f"transcript sha256 {transcript.digest()}")
    expected = matmul(A, library[params.D - 1])
    ok = transcript.decoded is not None and transcript.decoded == expected
    print(f"decoded == A\u00b7B_{params.D}: {'OK' if ok else 'MISMATCH'}")
    if cfg.out:
        Path(cfg.out).write_text(transcript.to_json())
    return EXIT_OK if ok else EXIT_FAIL


def cmd_run(cfg: ExperimentConfig) -> int:
    params = cfg.code_params()
    A, library = _random_inputs(params, cfg.seed)
    transcript = run_job(params, A, library, cfg.seed, mu=cfg.mu, gamma=cfg.gamma,
                         threads=cfg.threads)
    _emit(transcript.to_json(), cfg.out or "transcript.json")
    if transcript.decoded is None:
        print(f"decode failed: {transcript.failure}", file=sys.stderr)
        return EXIT_FAIL
    if transcript.decoded != matmul(A, library[params.D - 1]):
        print("decode failed: result differs from direct multiplication", file=sys.stderr)
        return EXIT_FAIL
    det = audit.check_result_determinism(audit.views_from_transcript(transcript), library)
    if not det.passed or replay(transcript) != transcript.decoded:
        print(f"determinism check failed: {det.detail}", file=sys.stderr)
        return EXIT_FAIL
    print(f"ok: decoded {params.r}x{params.t} product from K={params.K} of N={params.N} "
          f"workers; transcript sha256 {transcript.digest()}")
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig) -> int:
    kw = {"trials": cfg.trials, "seed": cfg.seed, "threads": cfg.threads}
    try:
        if cfg.preset == "fig2" or cfg.Ks:
            rows = latency.fig2_sweep(N=cfg.N, M=cfg.M, n=cfg.n, mu=cfg.mu, gamma=cfg.gamma,
                                      Ks=cfg.Ks or [4, 6, 8, 10], **kw)
        elif cfg.preset == "fig3" or cfg.mus:
            rows = latency.fig3_sweep(N=cfg.N, M=cfg.M, K=cfg.n * (cfg.m + 1), n=cfg.n,
                                      gamma=cfg.gamma, mus=cfg.mus, **kw)
        else:
            cfg.latency_params()
            rows = latency.sweep_point(cfg.N, cfg.M, cfg.m, cfg.n, cfg.mu, cfg.gamma, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for row in rows:
        if row.note.startswith("skipped"):
            print(f"warning: {row.scheme}: {row.note}", file=sys.stderr)
    _emit(latency.rows_to_csv(rows), cfg.out)
    return EXIT_OK


def cmd_audit(cfg: ExperimentConfig) -> int:
    report = audit.run_audit(audit.AuditConfig(cfg.seed, cfg.samples, cfg.allow_zero_point,
                                               cfg.threads))
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit(report.to_json(), cfg.out or "audit.json")
    for name in sorted({c.name for c in report.checks}):
        status = "FAIL" if name in report.failed() else "pass"
        print(f"{status}  {name}")
    if not report.passed:
        print(f"audit failed: {', '.join(report.failed())}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


COMMANDS = {"demo": cmd_demo, "run": cmd_run, "simulate": cmd_simulate, "audit": cmd_audit}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command in ("demo", "run"):
            cfg.code_params()
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "command": args.command, "reason": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
