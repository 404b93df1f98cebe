"""Command-line pipeline: ``permhair <subcommand> [flags]``.

Every subcommand accepts ``--config FILE`` (plain ``key=value`` lines whose
keys are flag names with dashes or underscores), ``--seed`` and ``--threads``.
Flags given on the command line override the config file, which overrides the
built-in defaults. Exit codes: 0 ok, 1 usage, 2 bad input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import io
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import codec, editing, fitting, hair_io, metrics, model, scalp, synthetic
from .errors import InputError, NumericalError, PermError

log = logging.getLogger("permhair")

HAIR_EXTS = (".hair", ".data", ".obj")
TRUNCATION_SWEEP = (5, 10, 15, 30, 64)


@dataclass
class PipelineConfig:
    """Defaults for every tunable in the pipeline."""

    points: int = hair_io.DEFAULT_POINTS          # L, strand points
    coeffs: int = codec.DEFAULT_COEFFS            # |gamma|
    split: int = codec.GUIDE_COEFFS               # low/residual channel boundary
    resolution: int = scalp.DEFAULT_RESOLUTION    # texture side
    epsilon: float = scalp.DEFAULT_EPSILON        # baldness cutoff in uv units
    max_root_distance: float = scalp.DEFAULT_MAX_ROOT_DISTANCE
    texture_iters: int = 500
    texture_lr: float = 1e-3
    guide_factor: int = model.DEFAULT_GUIDE_FACTOR
    dim: int = model.DEFAULT_DIM                  # theta / beta dimensionality
    upsampler_reg: float = model.REG_WEIGHT
    warmup: int = 1000
    joint: int = 4000
    lr: float = 0.1
    geo_weight: float = 1.0
    huber: float = fitting.HUBER_WIDTH
    seed: int = 0
    threads: int = 0
    scalp: str = "default"
    registration: str = ""

    def validate(self) -> "PipelineConfig":
        checks = [
            (self.points >= 2, "points must be >= 2"),
            (self.coeffs >= 1, "coeffs must be >= 1"),
            (0 <= self.split <= self.coeffs, "split must lie in [0, coeffs]"),
            (self.resolution >= 1, "resolution must be positive"),
            (self.epsilon > 0, "epsilon must be positive"),
            (self.max_root_distance > 0, "max-root-distance must be positive"),
            (self.texture_iters >= 0 and self.warmup >= 0 and self.joint >= 0, "iteration counts must be >= 0"),
            (self.texture_lr > 0 and self.lr > 0, "learning rates must be positive"),
            (self.guide_factor >= 1, "guide-factor must be positive"),
            (self.dim >= 1, "dim must be positive"),
            (self.upsampler_reg >= 0 and self.geo_weight >= 0 and self.huber >= 0, "weights must be >= 0"),
            (self.threads >= 0, "threads must be >= 0"),
            (self.scalp == "default", "only the built-in 'default' scalp map is available"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InputError(msg)
        return self


_HELP = {
    "points": "strand points L",
    "coeffs": "strand PCA coefficients |gamma|",
    "split": "low/residual channel boundary",
    "resolution": "texture resolution",
    "epsilon": "baldness distance cutoff in uv units",
    "max_root_distance": "largest accepted root-to-scalp distance",
    "texture_iters": "texture refinement iterations",
    "texture_lr": "texture refinement Adam learning rate",
    "guide_factor": "guide downsampling factor (256 -> 32 uses 8)",
    "dim": "theta/beta dimensionality",
    "upsampler_reg": "ridge weight on the upsampler residual",
    "warmup": "theta-only warm-up iterations",
    "joint": "joint theta/beta iterations",
    "lr": "parameterization Adam learning rate",
    "geo_weight": "geometric loss weight relative to the texture term (assumed 1)",
    "huber": "smooth-L1 width",
    "seed": "random seed",
    "threads": "cap on BLAS threads (0 leaves the library default)",
    "scalp": "scalp map ('default' is the built-in hemisphere)",
    "registration": "text file with a 4x4 or 3x4 matrix applied to world coordinates",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class Usage(Exception):
    pass


# --- file helpers ----------------------------------------------------------------

def _write(path, data: bytes):
    model.atomic_write(path, data)
    log.info("wrote %s (%d bytes)", path, len(data))


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _hair_files(paths) -> list:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(f for f in p.iterdir() if f.suffix in HAIR_EXTS)
        elif p.exists():
            out.append(p)
        else:
            raise InputError(f"no such file or directory: {p}")
    if not out:
        raise InputError("no hair files found")
    return out


def _read_hair(path) -> hair_io.HairModel:
    try:
        return hair_io.read_hair(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _write_hair(m: hair_io.HairModel, path):
    _write(path, hair_io.hair_bytes(m, path))


def _uniform(m: hair_io.HairModel, L: int) -> hair_io.HairModel:
    if m.is_uniform and (len(m) == 0 or len(m.strands[0]) == L):
        return m
    return hair_io.resample_model(m, L)


def _with_uv(m: hair_io.HairModel, cfg: PipelineConfig) -> hair_io.HairModel:
    if m.roots_uv is not None or len(m) == 0:
        return m
    roots = scalp.project_roots(m, scalp.ScalpMap.default(), cfg.max_root_distance)
    return m.with_roots_uv(roots.uv)


def _read_texture(path) -> scalp.GeometryTexture:
    return scalp.texture_from_bytes(_read_bytes(path))


def _read_basis(path) -> codec.StrandBasis:
    return codec.basis_from_bytes(_read_bytes(path))


def _read_params(path):
    return fitting.params_from_bytes(_read_bytes(path))


def _load_assets(path) -> model.HairAssets:
    if not Path(path).is_dir():
        raise InputError(f"asset directory {path} does not exist")
    return model.load_assets(path)


def _roots_uv(args, cfg: PipelineConfig) -> np.ndarray:
    if args.roots_from:
        m = _with_uv(_read_hair(args.roots_from), cfg)
        return m.roots_uv
    rng = np.random.default_rng(cfg.seed)
    return synthetic.sample_root_uv(args.num_roots, rng)


# --- subcommands -----------------------------------------------------------------

def cmd_convert(args, cfg):
    m = _read_hair(args.input)
    if cfg.registration:
        m = hair_io.apply_registration(m, np.loadtxt(cfg.registration))
    if args.normalize:
        m = hair_io.normalize_units(m, args.head_radius)
    _write_hair(m, args.output)
    print(f"strands={len(m)}\npoints={m.num_points}")


def cmd_resample(args, cfg):
    m = hair_io.resample_model(_read_hair(args.input), cfg.points)
    _write_hair(m, args.output)
    print(f"strands={len(m)}\npoints_per_strand={cfg.points}")


def _variance_table(basis: codec.StrandBasis) -> str:
    curve = codec.explained_variance_curve(basis)
    rows = [n for n in TRUNCATION_SWEEP if n <= len(curve)]
    if len(curve) not in rows:
        rows.append(len(curve))
    return "".join(f"{n} {curve[n - 1]:.9f}\n" for n in rows)


def cmd_fit_basis(args, cfg):
    files = _hair_files(args.input)

    def chunks():
        for f in files:
            m = _uniform(_read_hair(f), cfg.points)
            if len(m):
                yield m.points

    n = sum(len(c) for c in chunks())
    log.info("fitting a %d-coefficient basis on %d strands from %d files", cfg.coeffs, n, len(files))
    basis = codec.fit_basis_streaming(chunks, cfg.coeffs)
    _write(args.output, codec.basis_to_bytes(basis))
    sys.stdout.write("coeffs cumulative_variance\n" + _variance_table(basis))


def cmd_variance(args, cfg):
    basis = _read_basis(args.basis)
    if args.full:
        curve = codec.explained_variance_curve(basis)
        sys.stdout.write("".join(f"{i + 1} {v:.9f}\n" for i, v in enumerate(curve)))
    else:
        sys.stdout.write("coeffs cumulative_variance\n" + _variance_table(basis))


def cmd_encode(args, cfg):
    basis = _read_basis(args.basis)
    m = _uniform(_read_hair(args.input), basis.L)
    coeffs = codec.encode(m.points, basis)
    if args.truncate is not None:
        coeffs = codec.truncate(coeffs, args.truncate)
    _write(args.output, _npy_bytes(np.concatenate([m.roots, coeffs], axis=1)))


def cmd_decode(args, cfg):
    basis = _read_basis(args.basis)
    try:
        arr = np.load(io.BytesIO(_read_bytes(args.input)), allow_pickle=False)
    except ValueError as exc:
        raise InputError(f"{args.input} is not a .npy array") from exc
    if arr.ndim != 2 or arr.shape[1] != 3 + basis.num_coeffs:
        raise InputError(f"expected (N, {3 + basis.num_coeffs}) rows of root + coefficients, got {arr.shape}")
    strands = codec.decode(arr[:, 3:], basis)
    _write_hair(hair_io.HairModel.from_array(strands, arr[:, :3]), args.output)


def _npy_bytes(arr) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.asarray(arr, dtype=np.float64))
    return buf.getvalue()


def cmd_bake(args, cfg):
    basis = _read_basis(args.basis)
    m = _with_uv(_uniform(_read_hair(args.input), basis.L), cfg)
    tex = scalp.init_texture(m, basis, cfg.resolution, cfg.epsilon)
    _write(args.output, scalp.texture_to_bytes(tex))
    if args.preview:
        _write(args.preview, scalp.texture_preview_png(tex))
    print(f"resolution={cfg.resolution}\nhair_texels={int((~tex.bald).sum())}")


def cmd_fit_texture(args, cfg):
    basis = _read_basis(args.basis)
    m = _with_uv(_uniform(_read_hair(args.input), basis.L), cfg)
    tex = (_read_texture(args.texture) if args.texture
           else scalp.init_texture(m, basis, cfg.resolution, cfg.epsilon))
    tex, trace = scalp.optimize_texture(tex, m, basis, iters=cfg.texture_iters, lr=cfg.texture_lr)
    _write(args.output, scalp.texture_to_bytes(tex))
    if args.trace:
        _write(args.trace, "".join(f"{i} {v:.12g}\n" for i, v in enumerate(trace)).encode())
    recon = model.decode_texture_at(tex, m.roots_uv, basis, keep_bald=True)
    sys.stdout.write(metrics.compare(recon.points, m.points).to_lines())


def cmd_downsample(args, cfg):
    tex = _read_texture(args.input)
    guide = model.downsample_guide(tex, cfg.guide_factor, cfg.split)
    _write(args.output, scalp.texture_to_bytes(guide))


def cmd_upsample(args, cfg):
    guide = _read_texture(args.input)
    if args.method == "nearest":
        out = model.upsample_nearest(guide, cfg.guide_factor)
    elif args.method == "bilinear":
        out = model.upsample_bilinear(guide, cfg.guide_factor)
    else:
        if not args.upsampler:
            raise Usage("--method blend needs --upsampler")
        out = model.blend_upsample(guide, model.upsampler_from_bytes(_read_bytes(args.upsampler)))
    _write(args.output, scalp.texture_to_bytes(out))


def _texture_files(paths) -> list:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(p.glob("*.pgt"))
        elif p.exists():
            out.append(p)
        else:
            raise InputError(f"no such file or directory: {p}")
    if not out:
        raise InputError("no .pgt textures found")
    return out


def cmd_fit_spaces(args, cfg):
    files = _texture_files(args.input)
    guides, residuals = [], []
    for f in files:
        tex = _read_texture(f)
        guides.append(model.downsample_guide(tex, cfg.guide_factor, cfg.split))
        residuals.append(scalp.split_channels(tex, cfg.split, tex.channels)[1])
    log.info("fitting %d-dim spaces on %d textures", cfg.dim, len(files))
    gs = model.fit_guide_space(guides, cfg.dim)
    rs = model.fit_residual_space(residuals, cfg.dim)
    out = Path(args.output)
    _write(out / model.ASSET_FILES["guide_space"], model.space_to_bytes(gs))
    _write(out / model.ASSET_FILES["residual_space"], model.space_to_bytes(rs))
    if args.basis:
        _write(out / model.ASSET_FILES["basis"], _read_bytes(args.basis))
    model.write_manifest(out)
    print(f"theta_active={gs.active}\nbeta_active={rs.active}\ntextures={len(files)}")


def cmd_fit_upsampler(args, cfg):
    files = _texture_files(args.input)

    def pairs():
        for f in files:
            tex = _read_texture(f)
            low = tex.data[..., : cfg.split]
            yield model.downsample_guide(tex, cfg.guide_factor, cfg.split), low

    field = model.fit_upsampler(pairs(), reg=cfg.upsampler_reg)
    out = Path(args.output)
    if out.suffix == ".puf":
        _write(out, model.upsampler_to_bytes(field))
    else:
        _write(out / model.ASSET_FILES["upsampler"], model.upsampler_to_bytes(field))
        model.write_manifest(out)


def cmd_synth(args, cfg):
    assets = _load_assets(args.assets)
    theta, beta = _read_params(args.params)
    tex = assets.texture(theta, beta)
    if args.texture_out:
        _write(args.texture_out, scalp.texture_to_bytes(tex))
    if args.output:
        hair = model.decode_texture_at(tex, _roots_uv(args, cfg), assets.basis)
        _write_hair(hair, args.output)
        print(f"strands={len(hair)}")


def cmd_parameterize(args, cfg):
    assets = _load_assets(args.assets)
    kw = dict(warmup=cfg.warmup, joint=cfg.joint, lr=cfg.lr, geo_weight=cfg.geo_weight, huber=cfg.huber)
    if args.target:
        result = fitting.parameterize_hair(_read_texture(args.target), assets, **kw)
    elif args.input:
        m = _with_uv(_uniform(_read_hair(args.input), assets.basis.L), cfg)
        result = fitting.embed_strand_set(m, assets, epsilon=cfg.epsilon, texture_iters=cfg.texture_iters,
                                          texture_lr=cfg.texture_lr, **kw)
    else:
        raise Usage("parameterize needs --target or --in")
    _write(args.output, fitting.params_to_bytes(result.theta_star, result.beta_star))
    if args.trace:
        _write(args.trace, result.trace_text().encode())
    print(f"objective={result.final_objective:.9g}\ntexture_error={result.texture_error:.9g}")
    report = result.extras.get("strand_report", result.final_report)
    if report is not None:
        sys.stdout.write(report.to_lines())


def cmd_eval(args, cfg):
    pred, gt = _read_hair(args.pred), _read_hair(args.gt)
    if args.resample:
        pred, gt = hair_io.resample_model(pred, cfg.points), hair_io.resample_model(gt, cfg.points)
    sys.stdout.write(metrics.compare(pred.world_points(), gt.world_points()).to_lines())


def cmd_smooth(args, cfg):
    basis = _read_basis(args.basis)
    m = _uniform(_read_hair(args.input), basis.L)
    _write_hair(editing.smooth_hair(m, basis, args.n), args.output)


def cmd_transfer(args, cfg):
    basis = _read_basis(args.basis)
    structure = _uniform(_read_hair(args.structure), basis.L)
    detail = _uniform(_read_hair(args.detail), basis.L)
    if args.mode == "texel":
        structure, detail = _with_uv(structure, cfg), _with_uv(detail, cfg)
    out = editing.transfer_style(structure, detail, basis, cfg.split, args.mode)
    _write_hair(out, args.output)


def cmd_interp(args, cfg):
    theta, beta = editing.interpolate_params(_read_params(args.a), _read_params(args.b), args.t, args.mode)
    _write(args.output, fitting.params_to_bytes(theta, beta))


def cmd_sample_random(args, cfg):
    assets = _load_assets(args.assets)
    rng = np.random.default_rng(cfg.seed)
    theta = model.sample_params(assets.guide_space, rng, scaled=not args.unscaled) * args.scale
    beta = model.sample_params(assets.residual_space, rng, scaled=not args.unscaled) * args.scale
    _write(args.output, fitting.params_to_bytes(theta, beta))


# --- parser ----------------------------------------------------------------------

def _add_cfg(p, *names):
    defaults = PipelineConfig()
    for name in names:
        default = getattr(defaults, name)
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=type(default), default=None,
                       help=f"{_HELP[name]} (default: {default})")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value file of defaults; flags override it")
    _add_cfg(common, "seed", "threads")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")

    parser = _Parser(prog="permhair", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    sub.required = True

    def add(name, func, helptext, *cfg_names):
        p = sub.add_parser(name, parents=[common], help=helptext, description=helptext)
        _add_cfg(p, *cfg_names)
        p.set_defaults(func=func)
        return p

    p = add("convert", cmd_convert, "convert between .hair, .data and .obj", "registration")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--normalize", action="store_true", help="scale to the normalized head frame (radius 10)")
    p.add_argument("--head-radius", type=float, default=None, help="source head radius (default: estimated)")

    p = add("resample", cmd_resample, "resample every strand to L points by arc length", "points")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)

    p = add("fit-basis", cmd_fit_basis, "fit the frequency-domain strand basis", "points", "coeffs")
    p.add_argument("--in", dest="input", nargs="+", required=True, help="hair files or directories")
    p.add_argument("--out", dest="output", required=True)

    p = add("variance", cmd_variance, "print the cumulative explained-variance curve")
    p.add_argument("--basis", required=True)
    p.add_argument("--full", action="store_true", help="every coefficient count, not just the sweep")

    p = add("encode", cmd_encode, "encode strands to an (N, 3 + |gamma|) .npy of root + coefficients")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--truncate", type=int, default=None, help="zero coefficients from this index on")

    p = add("decode", cmd_decode, "decode an encode .npy back to strands")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--out", dest="output", required=True)

    p = add("bake", cmd_bake, "nearest-root geometry texture with baldness map",
            "resolution", "epsilon", "max_root_distance")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--preview", help="optional PNG preview")

    p = add("fit-texture", cmd_fit_texture, "refine a geometry texture with Adam on the geometric loss",
            "resolution", "epsilon", "max_root_distance", "texture_iters", "texture_lr")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--texture", help="initial texture (default: bake one)")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--trace", help="write the loss trace here")

    p = add("downsample", cmd_downsample, "extract the guide texture", "guide_factor", "split")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)

    p = add("upsample", cmd_upsample, "upsample a guide texture", "guide_factor")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--method", choices=("nearest", "bilinear", "blend"), default="bilinear")
    p.add_argument("--upsampler", help="fitted .puf field for --method blend")

    p = add("fit-spaces", cmd_fit_spaces, "fit the guide (theta) and residual (beta) PCA spaces",
            "dim", "guide_factor", "split")
    p.add_argument("--in", dest="input", nargs="+", required=True, help=".pgt textures or directories")
    p.add_argument("--out", dest="output", required=True, help="asset directory")
    p.add_argument("--basis", help="strand basis to copy into the asset directory")

    p = add("fit-upsampler", cmd_fit_upsampler, "least-squares blend weights from guide/texture pairs",
            "guide_factor", "split", "upsampler_reg")
    p.add_argument("--in", dest="input", nargs="+", required=True)
    p.add_argument("--out", dest="output", required=True, help="asset directory or .puf path")

    p = add("synth", cmd_synth, "synthesize a texture and strands from (theta, beta)", "max_root_distance")
    p.add_argument("--assets", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", dest="output", help="hair file to write")
    p.add_argument("--texture-out", help="also write the 64-channel texture")
    p.add_argument("--roots-from", help="take roots from this hair file")
    p.add_argument("--num-roots", type=int, default=10000, help="random roots when --roots-from is absent")

    p = add("parameterize", cmd_parameterize, "fit (theta, beta) to a texture or a strand set",
            "warmup", "joint", "lr", "geo_weight", "huber", "epsilon", "texture_iters", "texture_lr",
            "max_root_distance")
    p.add_argument("--assets", required=True)
    p.add_argument("--target", help="64-channel target texture")
    p.add_argument("--in", dest="input", help="hair file to embed (baked first)")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--trace", help="write the objective trace here")

    p = add("eval", cmd_eval, "position/curvature error between two hair files", "points")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--resample", action="store_true", help="resample both to L points first")

    p = add("smooth", cmd_smooth, "truncate every strand to the first n coefficients")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--n", type=int, default=codec.GUIDE_COEFFS, help="coefficients kept (default: 10)")
    p.add_argument("--out", dest="output", required=True)

    p = add("transfer", cmd_transfer, "low-order shape from one wig, detail from another",
            "split", "max_root_distance")
    p.add_argument("--structure", required=True)
    p.add_argument("--detail", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--mode", choices=editing.TRANSFER_MODES, default="texel")
    p.add_argument("--out", dest="output", required=True)

    p = add("interp", cmd_interp, "interpolate two parameter files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--mode", choices=editing.INTERP_MODES, default="joint")
    p.add_argument("--out", dest="output", required=True)

    p = add("sample-random", cmd_sample_random, "draw random (theta, beta) from the fitted spaces")
    p.add_argument("--assets", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--scale", type=float, default=1.0, help="multiplier on the draw")
    p.add_argument("--unscaled", action="store_true", help="unit-variance draw ignoring component spread")
    return parser


def read_config(path) -> dict:
    """Parse a key=value config file into PipelineConfig field values."""
    known = {f.name: f.type for f in fields(PipelineConfig)}
    defaults = asdict(PipelineConfig())
    out = {}
    for lineno, line in enumerate(_read_bytes(path).decode().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = type(defaults[key])(value)
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return out


def resolve_config(args) -> PipelineConfig:
    values = asdict(PipelineConfig())
    if args.config:
        values.update(read_config(args.config))
    for name in values:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return PipelineConfig(**values).validate()


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=cfg.threads):
                args.func(args, cfg)
        else:
            args.func(args, cfg)
    except Usage as exc:
        print(f"permhair {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 3
    except (InputError, PermError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
