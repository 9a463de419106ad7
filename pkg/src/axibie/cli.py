"""Command line front end.

Subcommands
-----------
solve      point-charge test solve, writes report.json, solution.csv
sweep      N_P x (2N+1) grid, one CSV per metric (error, T_mat, T_inv, T_fft, T_apply)
kernels    table of modal kernel values k_n with the evaluation path used
condition  per-mode extreme singular values of the modal systems
time       timing table and fitted scaling exponents

Configuration is a JSON file (``--config``) whose keys are the fields of
:class:`RunConfig`; flags override it. Exit codes: 0 success, 2 bad
configuration, 3 numerical failure, 4 oracle failure.
"""

import argparse
import csv
import dataclasses
from dataclasses import dataclass, field
import json
import logging
import math
import os
import sys

import numpy as np

from .constants import NORMALIZATION_VERSION
from .errors import EXIT_CODES, AxibieError, ConfigError

logger = logging.getLogger("axibie")

KERNEL_FIELDS = ("r", "z", "r_src", "z_src", "n_r", "n_z")


@dataclass
class RunConfig:
    """All run parameters. Unknown keys are rejected by :meth:`from_dict`."""

    geometry: object = "sphere"
    equation: str = "laplace"
    side: str = "interior"
    wavenumber: float = 0.0
    coupling: float | None = None
    x0: list | None = None
    n_panels: int = 10
    modes: int | None = 21
    epsilon: float = 1e-12
    quad_tol: float = 1e-12
    charges: int = 3
    seed: int = 0
    threads: int = 1
    out: str = "axibie-out"
    sweep_panels: list = field(default_factory=lambda: [5, 10])
    sweep_modes: list = field(default_factory=lambda: [11, 21])
    timing_sizes: list = field(default_factory=lambda: [[3, 15], [6, 31], [12, 61]])
    kernel_kinds: list = field(default_factory=lambda: ["laplace_single", "laplace_double_interior"])
    kernel_pairs: list = field(default_factory=lambda: [[1.0, 0.0, 1.0, 0.5, 0.6, 0.8]])
    kernel_n_max: int = 10
    kernel_path: str = "auto"

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self):
        return dataclasses.asdict(self)

    def validate(self):
        def positive_int(name, value):
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer")

        def modes_ok(name, value):
            positive_int(name, value)
            if value % 2 == 0:
                raise ConfigError(f"{name} must be odd (it is 2N+1)")

        positive_int("n_panels", self.n_panels)
        positive_int("charges", self.charges)
        positive_int("threads", self.threads)
        if self.modes is not None:
            modes_ok("modes", self.modes)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for name in ("epsilon", "quad_tol"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not 0 < v < 1:
                raise ConfigError(f"{name} must be in (0, 1)")
        if not isinstance(self.wavenumber, (int, float)) or not math.isfinite(self.wavenumber) or self.wavenumber < 0:
            raise ConfigError("wavenumber must be finite and >= 0")
        if self.coupling is not None and (not isinstance(self.coupling, (int, float)) or self.coupling < 0):
            raise ConfigError("coupling must be >= 0")
        if self.x0 is not None and (not isinstance(self.x0, (list, tuple)) or len(self.x0) != 2):
            raise ConfigError("x0 must be [r0, z0]")
        for v in self.sweep_panels:
            positive_int("sweep_panels entry", v)
        for v in self.sweep_modes:
            modes_ok("sweep_modes entry", v)
        for size in self.timing_sizes:
            if not isinstance(size, (list, tuple)) or len(size) != 2:
                raise ConfigError("timing_sizes entries must be [N_P, 2N+1]")
            positive_int("timing N_P", size[0])
            modes_ok("timing 2N+1", size[1])
        if self.kernel_n_max < 0:
            raise ConfigError("kernel_n_max must be >= 0")
        if self.kernel_path not in ("auto", "recursion", "fft"):
            raise ConfigError("kernel_path must be auto, recursion or fft")
        for p in self.kernel_pairs:
            if not isinstance(p, (list, tuple)) or len(p) not in (4, 6):
                raise ConfigError("kernel_pairs entries must be [r, z, r_src, z_src(, n_r, n_z)]")
        self.problem()  # checks equation/side combinations

    def problem(self):
        from .solver import ProblemSpec

        x0 = None if self.x0 is None else tuple(float(v) for v in self.x0)
        return ProblemSpec(equation=self.equation, side=self.side, wavenumber=float(self.wavenumber),
                           coupling=None if self.coupling is None else float(self.coupling), x0=x0,
                           quad_tol=float(self.quad_tol))

    def curve(self):
        from .geometry import build_curve

        return build_curve(self.geometry)


# -- output helpers ----------------------------------------------------------------------------

def _header_comment(kind):
    return f"# axibie {kind}; normalization={NORMALIZATION_VERSION}; lengths in model units; times in seconds"


def write_csv(path, header, rows, kind):
    with open(path, "w", newline="") as fh:
        fh.write(_header_comment(kind) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# -- subcommands ----------------------------------------------------------------------------------

def _n_from_modes(modes):
    return (modes - 1) // 2


def run_solve(cfg):
    from .geometry import build_mesh
    from .harness import (default_azimuthal_samples, error_report, oracle_boundary_data, random_charges,
                          test_points)
    from .solver import choose_truncation, evaluate_potential, solve

    curve = cfg.curve()
    spec = cfg.problem()
    mesh = build_mesh(curve, cfg.n_panels)
    oracle = random_charges(curve, spec.side, spec.equation, spec.wavenumber, cfg.charges, cfg.seed)
    if cfg.modes is None:
        M = 256
        while True:
            f = oracle_boundary_data(oracle, mesh, M, spec.side)
            try:
                n_max, tail = choose_truncation(f, cfg.epsilon, mesh.r * mesh.w)
                break
            except AxibieError:
                if M >= 1 << 14:
                    raise
                M *= 2
        M = max(M, default_azimuthal_samples(n_max))
    else:
        n_max = _n_from_modes(cfg.modes)
        M = default_azimuthal_samples(n_max)
    f = oracle_boundary_data(oracle, mesh, M, spec.side)
    result = solve(mesh, spec, f, n_max=n_max, seed=cfg.seed, workers=cfg.threads)
    pts = test_points(curve, spec.side)
    u = evaluate_potential(result, pts)
    rep = error_report(u, oracle.potential(pts), pts, cfg.seed)
    os.makedirs(cfg.out, exist_ok=True)
    report = {"normalization": NORMALIZATION_VERSION, "N_P": cfg.n_panels, "modes": 2 * n_max + 1,
              "error": rep.as_dict(), "max_residual": result.diagnostics["max_residual"],
              "charges": {"locations": oracle.locations, "strengths": oracle.strengths, "seed": cfg.seed}}
    write_json(os.path.join(cfg.out, "report.json"), report)
    write_json(os.path.join(cfg.out, "diagnostics.json"),
               {"timings": result.timings, "assembly": result.diagnostics["assembly"]})
    write_json(os.path.join(cfg.out, "config.json"), cfg.to_dict())
    rows = []
    for idx, n in enumerate(range(-n_max, n_max + 1)):
        for i in range(mesh.n_nodes):
            v = result.sigma_n[idx, i]
            rows.append([n, i, mesh.r[i], mesh.z[i], v.real, v.imag])
    write_csv(os.path.join(cfg.out, "solution.csv"), ["n", "node", "r", "z", "sigma_re", "sigma_im"], rows,
              "modal densities sigma_n")
    print(json.dumps({"rel_linf": rep.rel_linf, "modes": 2 * n_max + 1, "N_P": cfg.n_panels}))
    return 0


def run_sweep(cfg):
    from .harness import point_charge_test

    curve = cfg.curve()
    spec = cfg.problem()
    metrics = ("error", "T_mat", "T_inv", "T_fft", "T_apply")
    table = {m: {} for m in metrics}
    for n_p in cfg.sweep_panels:
        for modes in cfg.sweep_modes:
            try:
                rep, res, _ = point_charge_test(curve, spec, n_p, _n_from_modes(modes), seed=cfg.seed,
                                                n_charges=cfg.charges, workers=cfg.threads)
                table["error"][n_p, modes] = rep.rel_linf
                for m in metrics[1:]:
                    table[m][n_p, modes] = res.timings[m]
            except AxibieError as exc:
                logger.warning("cell N_P=%d 2N+1=%d failed: %s", n_p, modes, exc)
                for m in metrics:
                    table[m][n_p, modes] = f"failed:{exc.category}"
    os.makedirs(cfg.out, exist_ok=True)
    for m in metrics:
        rows = [[n_p] + [table[m][n_p, modes] for modes in cfg.sweep_modes] for n_p in cfg.sweep_panels]
        write_csv(os.path.join(cfg.out, f"{m}.csv"), ["N_P"] + [str(v) for v in cfg.sweep_modes], rows,
                  f"sweep {m}; rows N_P, columns 2N+1")
    write_json(os.path.join(cfg.out, "config.json"), cfg.to_dict())
    return 0


def run_kernels(cfg):
    from .modal_kernels import modal_kernel, modal_kernels_fft

    rows = []
    for kind in cfg.kernel_kinds:
        for p_idx, pair in enumerate(cfg.kernel_pairs):
            r, z, rs, zs = (float(v) for v in pair[:4])
            normal = tuple(float(v) for v in pair[4:6]) if len(pair) == 6 else None
            x0 = None if cfg.x0 is None else tuple(cfg.x0)
            common = dict(wavenumber=float(cfg.wavenumber), coupling=cfg.coupling, x0=x0)
            if cfg.kernel_path == "fft":
                seq = modal_kernels_fft(kind, (r, z), (rs, zs), normal, cfg.kernel_n_max, audit=False, **common)
            elif cfg.kernel_path == "recursion":
                seq = modal_kernel(kind, (r, z), (rs, zs), normal, cfg.kernel_n_max, **common)
            else:
                seq = modal_kernels_fft(kind, (r, z), (rs, zs), normal, cfg.kernel_n_max, **common)
            for n in range(-cfg.kernel_n_max, cfg.kernel_n_max + 1):
                v = complex(seq.at(n))
                rows.append([kind, p_idx, r, z, rs, zs, n, v.real, v.imag, seq.path_tag])
    os.makedirs(cfg.out, exist_ok=True)
    write_csv(os.path.join(cfg.out, "kernels.csv"),
              ["kind", "pair", "r", "z", "r_src", "z_src", "n", "value_re", "value_im", "path"], rows,
              "modal kernel coefficients k_n")
    return 0


def run_condition(cfg):
    from .geometry import build_mesh
    from .harness import conditioning_probe
    from .solver import assemble

    mesh = build_mesh(cfg.curve(), cfg.n_panels)
    n_max = _n_from_modes(cfg.modes if cfg.modes is not None else 21)
    systems = assemble(mesh, cfg.problem(), n_max, seed=cfg.seed)
    table = conditioning_probe(systems)
    os.makedirs(cfg.out, exist_ok=True)
    write_csv(os.path.join(cfg.out, "condition.csv"), ["n", "sigma_min", "sigma_max"],
              [[int(row[0]), row[1], row[2]] for row in table], "singular values of c I + A^(n)")
    return 0


def run_time(cfg):
    from .harness import fit_exponent, timing_run

    sizes = [(int(a), _n_from_modes(int(b))) for a, b in cfg.timing_sizes]
    rows = timing_run(cfg.curve(), cfg.problem(), sizes, seed=cfg.seed, threads=cfg.threads)
    os.makedirs(cfg.out, exist_ok=True)
    keys = ["N_P", "2N+1", "I", "N_tot", "T_mat", "T_inv", "T_fft", "T_apply"]
    write_csv(os.path.join(cfg.out, "timing.csv"), keys, [[row[k] for k in keys] for row in rows],
              "timing table")
    if len(rows) >= 2:
        n_tot = [row["N_tot"] for row in rows]
        fits = {k: fit_exponent(n_tot, [row[k] for row in rows]) for k in ("T_mat", "T_inv", "T_apply")}
        write_json(os.path.join(cfg.out, "scaling.json"), fits)
    return 0


COMMANDS = {"solve": run_solve, "sweep": run_sweep, "kernels": run_kernels, "condition": run_condition,
            "time": run_time}


def build_parser():
    parser = argparse.ArgumentParser(prog="axibie", description="Modal BIE solver for bodies of revolution")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with RunConfig fields")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out")
        p.add_argument("--np", dest="n_panels", type=int)
        p.add_argument("--modes", type=int, help="2N+1")
        p.add_argument("--wavenumber", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--geometry", help="built-in family name")
        p.add_argument("--auto-modes", action="store_true", help="choose N from the data at --epsilon")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args):
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
    for key in ("seed", "threads", "out", "n_panels", "modes", "wavenumber", "epsilon", "geometry"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    if args.auto_modes:
        data["modes"] = None
    return RunConfig.from_dict(data)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=cfg.threads):
            return COMMANDS[args.command](cfg)
    except AxibieError as exc:
        category = getattr(exc, "category", "numerical")
        print(json.dumps({"error": category, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES.get(category, 3)
    except (TypeError, ValueError) as exc:
        print(json.dumps({"error": "config", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES["config"]


if __name__ == "__main__":
    sys.exit(main())
