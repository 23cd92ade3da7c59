import argparse
import logging
import os
import sys
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from pairlab import __version__
from pairlab.config import (ExperimentConfig, apply_overrides, config_hash,
                            load_config, parse_mask_selector)
from pairlab.data import Dataset, make_tomography_dataset
from pairlab.diagnostics import (MetricsRecord, bound_report,
                                 estimate_constants, kMetricsColumns,
                                 ood_metrics, rre, spectral_constants, ssim)
from pairlab.errors import InputFileError, PairlabError, UsageError
from pairlab.export import (read_dataset, read_linear_pair, read_model,
                            write_csv, write_dataset, write_linear_pair,
                            write_model)
from pairlab.linear import closed_form_lsi_zy, linear_pair_from_dataset
from pairlab.lsi import (ensemble_mean, lsi_observation_space,
                         lsi_parameter_space, model_space_lsi,
                         tikhonov_baseline)
from pairlab.masks import (MaskOperator, apply_mask, kBlockColumns, kIdentity,
                           make_mask)
from pairlab.pair import (PairModel, apply, default_pair_spec, init_model,
                          train, train_encdec)
from pairlab.random import derive_seed, kSplitStream
from pairlab.tomography import ForwardOperator, build_radon

logger = logging.getLogger(__name__)

kSplits = ("train", "test", "calib", "ood")
kMethods = ("pair", "lsi-zy", "lsi-zx", "mlsi", "tikhonov", "encdec", "linear")
kDatasets = ("test", "ood")
kSweepMethods = ("baseline", "pair", "lsi-zy", "mlsi")
kOodPopulations = ("full", "masked", "masked+lsi")
kCertifyModes = ("linear", "model")


class Layout:
    """Paths of the output tree."""

    def __init__(self, root: str):
        self.root = root

    def _path(self, *parts: str) -> str:
        path = os.path.join(self.root, *parts)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path

    def dataset(self, split: str) -> str:
        return self._path("data", f"{split}.pairds")

    def model(self) -> str:
        return self._path("models", "pair.json")

    def encdec(self, kind: str) -> str:
        return self._path("models", f"encdec-{kind}.json")

    def linear(self) -> str:
        return self._path("models", "linear.json")

    def prior(self) -> str:
        return self._path("models", "x_mean.npy")

    def trace(self) -> str:
        return self._path("train_trace.csv")

    def invert(self, method: str, selector: str, dataset: str,
               suffix: str) -> str:
        return self._path("invert", f"{method}-{selector}-{dataset}.{suffix}")

    def table(self, name: str) -> str:
        return self._path(f"{name}.csv")


def _comment(config: ExperimentConfig) -> str:
    seeds = ";".join(f"{k}:{v}" for k, v in config.seeds().items())
    return f"config_hash={config_hash(config)} seeds={seeds}"


def _operator(config: ExperimentConfig) -> ForwardOperator:
    g = config.geometry
    return build_radon(g.grid_side, g.angle_count, g.detector_count,
                       g.detector_spacing)


def _mask(config: ExperimentConfig, op: ForwardOperator,
          selector: str) -> MaskOperator:
    kind, seed = parse_mask_selector(selector, config)
    return make_mask(kind, op.geometry.observation_shape, config.masks.fraction,
                     seed)


def _read_split(layout: Layout, split: str) -> Dataset:
    path = layout.dataset(split)
    if not os.path.exists(path):
        raise InputFileError(f"{path}: dataset missing, run 'pairlab gen' first")
    return read_dataset(path)


def _check_model_file(path: str) -> str:
    if not os.path.exists(path):
        raise InputFileError(f"{path}: model missing, run 'pairlab train' first")
    return path


def _read_prior(layout: Layout) -> np.ndarray:
    """Pixel-wise mean of the training parameters."""
    return np.load(_check_model_file(layout.prior()))


def _image(x: np.ndarray, grid_side: int) -> np.ndarray:
    return x.reshape(grid_side, grid_side)


def _sorted_rows(records: List[MetricsRecord]) -> List[dict]:
    return [
        r.to_row()
        for r in sorted(records, key=lambda r: (r.sample_id, r.method))
    ]


# Commands.


def cmd_gen(config: ExperimentConfig, args: argparse.Namespace) -> None:
    layout = Layout(config.output_dir)
    op = _operator(config)
    d = config.data
    counts = {
        "train": d.train_count,
        "test": d.test_count,
        "calib": d.calib_count,
        "ood": d.ood_count,
    }
    normalization = None
    for index, split in enumerate(kSplits):
        if split == "ood" and not d.ood:
            continue
        seed = derive_seed(d.seed, kSplitStream, index)
        dataset = make_tomography_dataset(op, counts[split], seed,
                                          d.noise_fraction, split == "ood",
                                          normalization)
        normalization = dataset.normalization
        write_dataset(dataset, layout.dataset(split))
        logger.info("wrote %s", layout.dataset(split))


def cmd_train(config: ExperimentConfig, args: argparse.Namespace) -> None:
    layout = Layout(config.output_dir)
    dataset = _read_split(layout, "train")
    m = config.model
    spec = default_pair_spec(dataset.n, dataset.q, m.latent_x, m.latent_y,
                             m.hidden_x, m.hidden_y, m.activation)

    result = train(init_model(spec, m.seed, dataset.normalization), dataset,
                   config.train)
    write_model(result.model, layout.model())
    np.save(layout.prior(), dataset.X.mean(axis=0))
    write_csv(layout.trace(), ("epoch", "loss"),
              [{"epoch": k, "loss": v} for k, v in enumerate(result.trace)],
              _comment(config))

    if m.encdec:
        op = _operator(config)
        for kind in (kIdentity,) + tuple(config.masks.kinds):
            P = None if kind == kIdentity else _mask(config, op, kind)
            encdec = train_encdec(init_model(spec, m.seed, dataset.normalization),
                                  dataset, config.train, P)
            write_model(encdec.model, layout.encdec(kind))
    if m.linear:
        pair = linear_pair_from_dataset(_operator(config).matrix, dataset,
                                        min(dataset.n, m.latent_x),
                                        min(dataset.q, m.latent_y))
        write_linear_pair(pair, layout.linear())


def _invert_sample(method: str, config: ExperimentConfig, models: Dict,
                   op: ForwardOperator, P: MaskOperator,
                   y_sub: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Returns the reconstruction and the observation latent behind it."""
    lsi = config.lsi
    model = models.get("pair")
    if method == "pair":
        return apply(model, "end_to_end", y_sub), model.encode_y(
            model.normalize_y(y_sub))
    if method == "lsi-zy":
        r = lsi_observation_space(model, P, y_sub, lsi.zy)
        return r.x_hat, r.z
    if method == "lsi-zx":
        r = lsi_parameter_space(model, P, y_sub, lsi.zx)
        return r.x_hat, model.map_fwd(r.z)
    if method == "mlsi":
        results = model_space_lsi(model, op, P, y_sub, lsi.mlsi, lsi.ensemble,
                                  lsi.ensemble_seed, models["prior"],
                                  lsi.perturbation)
        best = min(results, key=lambda r: r.final_residual)
        return ensemble_mean(results), model.map_fwd(best.z)
    if method == "encdec":
        return apply(models["encdec"], "end_to_end", y_sub), None
    z, x_hat = closed_form_lsi_zy(models["linear"], P, y_sub)
    return x_hat, z


def _metrics(config: ExperimentConfig, sample_id: int, method: str,
             selector: str, P: MaskOperator, x_hat: np.ndarray, x: np.ndarray,
             pair=None, z_y: Optional[np.ndarray] = None,
             y: Optional[np.ndarray] = None) -> MetricsRecord:
    record = MetricsRecord()
    if pair is not None and z_y is not None:
        record = ood_metrics(pair, x_hat, z_y, y)
    side = config.geometry.grid_side
    record.sample_id = sample_id
    record.method = method
    record.mask_kind = selector
    record.missing_fraction = P.missing_fraction
    record.rre = rre(x_hat, x)
    record.ssim = ssim(_image(x_hat, side), _image(x, side))
    return record


def cmd_invert(config: ExperimentConfig, args: argparse.Namespace) -> None:
    method, selector, which = args.method, args.mask, args.dataset
    if method not in kMethods:
        raise UsageError(f"unknown method '{method}', expected one of {', '.join(kMethods)}")
    if which not in kDatasets:
        raise UsageError(f"unknown dataset '{which}', expected test or ood")
    layout = Layout(config.output_dir)
    op = _operator(config)
    P = _mask(config, op, selector)
    dataset = _read_split(layout, which)

    records: List[MetricsRecord] = []
    if method == "tikhonov":
        Y_sub = apply_mask(P, dataset.Y)
        stack = []
        for lam in config.lsi.tikhonov_lambdas:
            X_hat = tikhonov_baseline(op, Y_sub, lam)
            stack.append(X_hat)
            for i, (x_hat, x) in enumerate(zip(X_hat, dataset.X)):
                records.append(
                    _metrics(config, i, f"tikhonov[{lam:g}]", selector, P,
                             x_hat, x))
        reconstructions = np.stack(stack)
    else:
        models = {}
        if method in ("pair", "lsi-zy", "lsi-zx", "mlsi"):
            models["pair"] = read_model(_check_model_file(layout.model()))
            if method == "mlsi":
                models["prior"] = _read_prior(layout)
        elif method == "encdec":
            kind, _ = parse_mask_selector(selector, config)
            models["encdec"] = read_model(_check_model_file(layout.encdec(kind)))
        else:
            models["linear"] = read_linear_pair(
                _check_model_file(layout.linear()))
        surrogate = models.get("pair", models.get("linear"))
        reconstructions = np.empty_like(dataset.X)
        for i, (x, y) in enumerate(zip(dataset.X, dataset.Y)):
            x_hat, z_y = _invert_sample(method, config, models, op, P,
                                        apply_mask(P, y))
            reconstructions[i] = x_hat
            records.append(
                _metrics(config, i, method, selector, P, x_hat, x, surrogate,
                         z_y, y))

    np.save(layout.invert(method, selector, which, "npy"), reconstructions)
    write_csv(layout.invert(method, selector, which, "csv"), kMetricsColumns,
              _sorted_rows(records), _comment(config))
    logger.info("%s on %s (%s): mean RRE %.4f", method, which, selector,
                np.mean([r.rre for r in records]))


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def cmd_sweep(config: ExperimentConfig, args: argparse.Namespace) -> None:
    layout = Layout(config.output_dir)
    op = _operator(config)
    dataset = _read_split(layout, "test")
    model = read_model(_check_model_file(layout.model()))
    x_prior = _read_prior(layout)
    lsi = config.lsi

    rows = []
    for fraction in config.sweep.fractions:
        P = make_mask(config.sweep.kind, op.geometry.observation_shape,
                      fraction, config.masks.seed)
        data_error: Dict[str, List[float]] = {m: [] for m in kSweepMethods}
        model_rre: Dict[str, List[float]] = {m: [] for m in kSweepMethods}
        for x, y in zip(dataset.X, dataset.Y):
            y_sub = apply_mask(P, y)
            data_error["baseline"].append(_relative(y_sub, y))

            y_pair = model.denormalize_y(
                model.decode_y(model.encode_y(model.normalize_y(y_sub))))
            data_error["pair"].append(_relative(y_pair, y))
            model_rre["pair"].append(rre(apply(model, "end_to_end", y_sub), x))

            # Data completion runs longer than the inversion budget.
            r = lsi_observation_space(model, P, y_sub, lsi.completion)
            data_error["lsi-zy"].append(_relative(r.y_completed, y))
            r = lsi_observation_space(model, P, y_sub, lsi.zy)
            model_rre["lsi-zy"].append(rre(r.x_hat, x))

            results = model_space_lsi(model, op, P, y_sub, lsi.mlsi,
                                      lsi.ensemble, lsi.ensemble_seed, x_prior,
                                      lsi.perturbation)
            x_hat = ensemble_mean(results)
            data_error["mlsi"].append(_relative(op.apply(x_hat), y))
            model_rre["mlsi"].append(rre(x_hat, x))

        for method in kSweepMethods:
            errors, rres = data_error[method], model_rre[method]
            rows.append({
                "missing_fraction": fraction,
                "method": method,
                "data_error_mean": float(np.mean(errors)),
                "data_error_std": float(np.std(errors)),
                "model_rre_mean": float(np.mean(rres)) if rres else np.nan,
                "model_rre_std": float(np.std(rres)) if rres else np.nan,
            })
        logger.info("sweep fraction %g done", fraction)

    columns = ("missing_fraction", "method", "data_error_mean", "data_error_std",
               "model_rre_mean", "model_rre_std")
    write_csv(layout.table("sweep"), columns, rows, _comment(config))


def cmd_ood(config: ExperimentConfig, args: argparse.Namespace) -> None:
    layout = Layout(config.output_dir)
    op = _operator(config)
    selector = args.mask or kBlockColumns
    P = _mask(config, op, selector)
    dataset = _read_split(layout, "test")
    model = read_model(_check_model_file(layout.model()))

    records = []
    for i, (x, y) in enumerate(zip(dataset.X, dataset.Y)):
        y_sub = apply_mask(P, y)
        r = lsi_observation_space(model, P, y_sub, config.lsi.zy)
        populations = {
            "full": (apply(model, "end_to_end", y),
                     model.encode_y(model.normalize_y(y))),
            "masked": (apply(model, "end_to_end", y_sub),
                       model.encode_y(model.normalize_y(y_sub))),
            "masked+lsi": (r.x_hat, r.z),
        }
        for population in kOodPopulations:
            x_hat, z_y = populations[population]
            records.append(
                _metrics(config, i, population, selector, P, x_hat, x, model,
                         z_y, y))
    write_csv(layout.table("ood"), kMetricsColumns, _sorted_rows(records),
              _comment(config))


def cmd_certify(config: ExperimentConfig, args: argparse.Namespace) -> None:
    mode = args.mode
    if mode not in kCertifyModes:
        raise UsageError(f"unknown certificate mode '{mode}', expected linear or model")
    layout = Layout(config.output_dir)
    op = _operator(config)
    c = config.certify
    P = _mask(config, op, c.mask)
    calib = _read_split(layout, "calib")
    test = _read_split(layout, "test")

    if mode == "linear":
        pair = read_linear_pair(_check_model_file(layout.linear()))
        constants = spectral_constants(pair, op, P, calib.X, calib.Y,
                                       c.pair_count, c.seed)
    else:
        pair = read_model(_check_model_file(layout.model()))
        constants = estimate_constants(pair, op, calib.X, calib.Y, P,
                                       c.pair_count, c.seed, c.radius)
    report = bound_report(constants, pair, op, P, test.X, test.Y,
                          config.lsi.zy)

    rows = [{
        "sample_id": s.sample_id,
        "mode": mode,
        "mask_kind": c.mask,
        "missing_fraction": P.missing_fraction,
        "bound_predicted": s.predicted_error,
        "bound_actual": s.actual_error,
        "bound_ok": s.error_ok,
        "residual_predicted": s.predicted_residual,
        "residual_actual": s.actual_residual,
        "residual_ok": s.residual_ok,
        "lsi_residual_ok": s.first_step_ok,
        "vacuous": s.vacuous,
    } for s in report.samples]
    columns = tuple(rows[0]) if rows else ()
    kind = "sampled" if constants.sampled else "spectral"
    write_csv(layout.table(f"certify-{mode}"), columns, rows,
              f"{_comment(config)} constants={kind}")
    logger.info("certificate (%s constants): bound holds on %.1f%% of samples",
                kind, 100.0 * report.error_rate)


# Entry point.


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="experiment configuration (JSON)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--log-level",
                        default="INFO",
                        choices=("DEBUG", "INFO", "WARNING", "ERROR"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairlab",
        description="Paired autoencoders and latent-space inference.",
        allow_abbrev=False,
        epilog="Configuration keys can be overridden with --a.b.c=value.")
    parser.add_argument("--version",
                        action="version",
                        version=f"pairlab {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    def add(name: str, fn: Callable, help: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help, allow_abbrev=False)
        _add_common(sub)
        sub.set_defaults(fn=fn)
        return sub

    add("gen", cmd_gen, "generate datasets")
    add("train", cmd_train, "train the paired autoencoders")
    invert = add("invert", cmd_invert, "reconstruct a dataset")
    invert.add_argument("--method", default="pair", help=", ".join(kMethods))
    invert.add_argument("--mask", default=kIdentity, help="<kind> or <kind>~alt")
    invert.add_argument("--dataset", default="test", help="test or ood")
    add("sweep", cmd_sweep, "error statistics versus missing fraction")
    ood = add("ood", cmd_ood, "out-of-distribution metric populations")
    ood.add_argument("--mask", help="<kind> or <kind>~alt")
    certify = add("certify", cmd_certify, "evaluate the stability bound")
    certify.add_argument("--mode", default="model", help="linear or model")
    return parser


def _split_overrides(extra: Sequence[str]) -> List[str]:
    overrides = []
    for arg in extra:
        if not arg.startswith("--") or "=" not in arg:
            raise UsageError(f"unrecognized argument '{arg}'")
        overrides.append(arg[2:])
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = apply_overrides(config, _split_overrides(extra))
        if args.out:
            config.output_dir = args.out
        config.validate()
        logger.info("%s: config %s, output %s", args.command,
                    config_hash(config), config.output_dir)
        args.fn(config, args)
    except PairlabError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
