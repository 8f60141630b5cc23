"""
PrivaCare Command Line
Private ML pipeline: preprocessing, DP training, activation approximation and encrypted inference
"""

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from models.approx_models import ApproxConfig
from models.data_models import PreprocessOptions, PreprocessSpec
from models.network_models import VARIANT_NAMES
from models.report_models import RunManifest
from models.training_models import AdamConfig, DpConfig, SamplingMode, TrainConfig
from services.artifact_store import (
    ArtifactError, load_ciphertexts, load_encrypted_model, load_evaluation_keys, load_params,
    load_public_key, load_score, load_secret_key, save_ciphertexts, save_encrypted_model,
    save_keys, save_score,
)
from services.benchmark import bench_encrypted_inference
from services.data_pipeline import (
    DataError, Dataset, load_dataset, load_records, preprocess_records, save_dataset,
    split, standardize, synthesize,
)
from services.dpsgd import PrivacyError, epsilon_sweep, noise_multiplier_for_epsilon, SWEEP_EPSILONS
from services.encoding import EncodingError
from services.encrypted_inference import (
    PATH_GENERIC, PATH_SHIFT, EncryptedCircuit, decrypt_score, encrypt_features,
    quantize_model, quantized_scores,
)
from services.fvrns import FvRnsError, FvRnsScheme, generate_params
from services.metrics import (
    MetricsError, evaluate_scores, format_bench_table, format_eval_table,
    format_grad_norm_table, grad_norm_stats, report_line,
)
from services.network import ModelError, gradient_norms, init_model, load_model, predict_scores, save_model, train
from services.polyapprox import ApproximationError, approximation_report, calibrate_interval
from services.polyring import PolyRingError
from utils.logging_config import RunLogger, get_logger, setup_logging
from utils.settings import Settings, get_settings

logger = get_logger(__name__)
run_logger = RunLogger()

MODULE_ERRORS = (
    PolyRingError, FvRnsError, EncodingError, ApproximationError, PrivacyError, ModelError,
    DataError, MetricsError, ArtifactError, ValidationError, OSError,
)

TRAIN_FILE = "train.npz"
TEST_FILE = "test.npz"
PREPROCESS_FILE = "preprocess.json"
MANIFEST_FILE = "manifest.json"


# -- manifests ----------------------------------------------------------

def _effective_config(args: argparse.Namespace) -> Dict[str, object]:
    skip = {"func", "log_level", "log_dir"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _manifest(args: argparse.Namespace, inputs: Sequence[str] = (), outputs: Sequence[str] = (),
              seeds: Optional[Dict[str, int]] = None, counters: Optional[Dict[str, int]] = None,
              results: Optional[Dict[str, Optional[float]]] = None) -> RunManifest:
    return RunManifest(
        subcommand=args.command,
        config=_effective_config(args),
        seeds=seeds or {},
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        counters=counters or {},
        results=results or {},
    )


def _sidecar(output: str) -> Path:
    path = Path(output)
    if path.is_dir():
        return path / MANIFEST_FILE
    return path.with_name(path.name + "." + MANIFEST_FILE)


def _write_manifests(manifest: RunManifest) -> List[Path]:
    """Write the manifest next to each output; directory outputs get one inside"""
    document = {"digest": manifest.digest(), "manifest": manifest.model_dump(mode="json")}
    written = set()
    for output in manifest.outputs:
        path = _sidecar(output)
        if path in written:
            continue
        path.write_text(json.dumps(document, indent=2, sort_keys=True), encoding="utf-8")
        written.add(path)
    return sorted(written)


def read_manifest(output: str) -> Optional[RunManifest]:
    path = _sidecar(output)
    if not path.exists():
        return None
    return RunManifest.model_validate(json.loads(path.read_text(encoding="utf-8"))["manifest"])


# -- helpers ------------------------------------------------------------

def _read_row(path: str, index: int = 0) -> np.ndarray:
    """One feature row from a dataset cache (by index) or a comma-separated text file"""
    if Path(path).suffix == ".npz":
        dataset = load_dataset(path)
        if not 0 <= index < len(dataset):
            raise DataError(f"Row index {index} outside dataset of {len(dataset)} rows")
        return dataset.features[index]
    try:
        return np.loadtxt(path, delimiter=",", ndmin=1, dtype=np.float64)
    except ValueError as e:
        raise DataError(f"Cannot parse feature row {path}: {str(e)}")


def _save_split(out: Path, train_set: Dataset, test_set: Dataset) -> List[str]:
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(train_set, out / TRAIN_FILE)
    save_dataset(test_set, out / TEST_FILE)
    return [str(out / TRAIN_FILE), str(out / TEST_FILE)]


def _data_digest(data_dir: Path, train_set: Dataset) -> str:
    spec_path = data_dir / PREPROCESS_FILE
    if spec_path.exists():
        return PreprocessSpec.from_text(spec_path.read_text(encoding="utf-8")).digest()
    return train_set.digest()


def _train_config(args: argparse.Namespace, dataset_size: int, sigma: Optional[float],
                  dp: bool) -> TrainConfig:
    dp_config = None
    if dp:
        dp_config = DpConfig(
            clip_bound=args.clip,
            noise_multiplier=sigma if sigma is not None else 4.0,
            lot_size=args.batch,
            dataset_size=dataset_size,
            delta=args.delta,
            epsilon_budget=getattr(args, "eps_budget", None),
            sampling=SamplingMode(args.sampling),
        )
    return TrainConfig(
        batch_size=args.batch,
        epochs=args.epochs,
        positive_weight=args.positive_weight,
        optimizer=AdamConfig(learning_rate=args.lr),
        dp=dp_config,
        seed=args.seed,
        hidden_units=args.hidden,
        activation=args.activation,
        swish_exponents=getattr(args, "swish_exponents", None),
        use_bias=not args.no_bias,
        log_path=getattr(args, "log", None),
    )


def _planned_steps(args: argparse.Namespace, dataset_size: int) -> int:
    return args.epochs * max(dataset_size // args.batch, 1)


# -- subcommands --------------------------------------------------------

def cmd_preprocess(args: argparse.Namespace) -> RunManifest:
    options = PreprocessOptions(
        group_secondary_diagnoses=args.group_secondary,
        ordinal_age=args.ordinal_age,
        train_ratio=args.train_ratio,
    )
    records = load_records(args.input)
    spec, train_set, test_set = preprocess_records(records, args.seed, options)
    out = Path(args.out)
    outputs = _save_split(out, train_set, test_set)
    (out / PREPROCESS_FILE).write_text(spec.to_text(), encoding="utf-8")
    print(f"{len(train_set)} train / {len(test_set)} test rows, d={spec.dimension}, spec {spec.digest()[:12]}")
    return _manifest(args, [args.input], outputs + [str(out / PREPROCESS_FILE)], seeds={"split": args.seed})


def cmd_synth(args: argparse.Namespace) -> RunManifest:
    dataset = synthesize(args.n, args.d, args.pos_rate, args.signal, args.seed, raw_scale=args.raw_scale)
    train_set, test_set = split(dataset, args.seed, args.train_ratio)
    outputs = _save_split(Path(args.out), train_set, test_set)
    print(f"{len(train_set)} train / {len(test_set)} test rows, d={args.d}, positive rate {dataset.positive_rate:.3f}")
    return _manifest(args, outputs=outputs, seeds={"synth": args.seed, "split": args.seed})


def cmd_train(args: argparse.Namespace) -> RunManifest:
    data_dir = Path(args.data)
    train_set = load_dataset(data_dir / TRAIN_FILE)
    n = len(train_set)
    sigma = args.sigma
    if args.dp and args.target_eps is not None:
        delta = args.delta if args.delta is not None else 1.0 / n
        sigma = noise_multiplier_for_epsilon(args.target_eps, args.batch / n, _planned_steps(args, n), delta)
    config = _train_config(args, n, sigma, args.dp)

    model, history = train(train_set.features, train_set.labels, config)
    model = replace(model, preprocess_digest=_data_digest(data_dir, train_set))
    save_model(model, args.out)

    summary = f"trained {history.steps} steps, final loss {history.epoch_losses[-1]:.6f}" \
        if history.epoch_losses else f"trained {history.steps} steps"
    if config.dp is not None:
        summary += f", sigma {config.dp.noise_multiplier:.4f}, epsilon {history.epsilon:.4f} " \
                   f"at delta {history.delta:.2e}"
        if history.stopped_early:
            summary += " (budget reached)"
    print(summary)

    outputs = [args.out] + ([args.log] if args.log else [])
    results = {
        "epsilon": history.epsilon,
        "delta": history.delta,
        "noise_multiplier": config.dp.noise_multiplier if config.dp else None,
        "final_loss": history.epoch_losses[-1] if history.epoch_losses else None,
        "steps": float(history.steps),
    }
    return _manifest(args, [str(data_dir / TRAIN_FILE)], outputs, seeds={"train": args.seed}, results=results)


def cmd_approx(args: argparse.Namespace) -> None:
    settings = get_settings()
    interval_a = args.interval_a
    if args.calibrate:
        interval_a, scores = calibrate_interval()
        for a, score in sorted(scores.items()):
            print(f"a={a:<5} score={score:.3e}")
    config = ApproxConfig(
        interval_a=interval_a if interval_a is not None else settings.interval_a,
        degree=args.degree,
        bound=args.bound,
        radius=args.radius,
        grid_points=settings.grid_points,
    )
    report = approximation_report(config)
    print(report.to_text())
    if args.json:
        print(report_line(report))
    return None


def _params_from(args: argparse.Namespace, settings: Settings):
    return generate_params(
        ring_dimension=args.n,
        plain_bits=args.plain_bits if args.plain_bits is not None else settings.plain_bits,
        coeff_bits=settings.coeff_bits,
        coeff_count=args.coeff_count if args.coeff_count is not None else settings.coeff_count,
        instances=settings.plain_instances,
        relin_base_bits=settings.relin_base_bits,
        noise_std=settings.noise_std,
    )


def cmd_keygen(args: argparse.Namespace) -> RunManifest:
    params = _params_from(args, get_settings())
    scheme = FvRnsScheme(params)
    sk, pk, evk = scheme.keygen(seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(args, outputs=[str(out)], seeds={"keygen": args.seed})
    save_keys(out, params, sk, pk, evk, manifest.digest())
    print(f"keys for n={params.ring_dimension}, params {params.digest()[:12]} written to {out}")
    return manifest


def cmd_encrypt_model(args: argparse.Namespace) -> RunManifest:
    model = load_model(args.model)
    params = load_params(args.keys)
    emodel = quantize_model(model, scale_bits=args.scale_bits, input_bits=args.input_bits, params=params)
    manifest = _manifest(args, [args.model, args.keys], [args.out])
    save_encrypted_model(args.out, emodel, params, manifest.digest())
    print(f"encrypted model d={emodel.input_dim}, h={emodel.hidden_units}, "
          f"output exponent 2^{emodel.scale.output_exponent}")
    return manifest


def cmd_encrypt_input(args: argparse.Namespace) -> RunManifest:
    params = load_params(args.keys)
    pk = load_public_key(args.keys, params)
    scheme = FvRnsScheme(params)
    x = _read_row(args.row, args.index)
    cts = encrypt_features(scheme, pk, x, args.input_bits, seed=args.seed)
    manifest = _manifest(args, [args.row, args.keys], [args.out], seeds={"encrypt": args.seed})
    save_ciphertexts(args.out, cts, params, manifest.digest())
    print(f"encrypted {len(cts)} features at 2^{args.input_bits}")
    return manifest


def cmd_infer(args: argparse.Namespace) -> RunManifest:
    emodel, params = load_encrypted_model(args.emodel)
    evk = load_evaluation_keys(args.keys, params)
    cts = load_ciphertexts(args.input, params)
    scheme = FvRnsScheme(params)
    start = time.perf_counter()
    score = EncryptedCircuit(scheme, evk, path=args.path, workers=args.workers).forward(emodel, cts)
    run_logger.log_stage(args.command, "encrypted_forward", time.perf_counter() - start)
    counters = score.ciphertext.counters.counts()
    run_logger.log_counters(args.out, counters)
    manifest = _manifest(args, [args.emodel, args.input, args.keys], [args.out], counters=counters)
    save_score(args.out, score, params, manifest.digest())
    print(f"encrypted score at 2^{score.exponent}: " + ", ".join(f"{k}={v}" for k, v in counters.items()))
    return manifest


def cmd_decrypt(args: argparse.Namespace) -> Optional[RunManifest]:
    params = load_params(args.keys)
    sk = load_secret_key(args.keys, params)
    score, artifact = load_score(args.input_path, params)
    scheme = FvRnsScheme(params)
    budget = scheme.check_integrity(score.ciphertext, sk)
    value, real = decrypt_score(scheme, sk, score)
    counters = artifact.meta["ciphertexts"][0].get("counters", {})
    document = {"score": real, "integer": value, "exponent": score.exponent,
                "noise_budget_bits": budget, "counters": counters}
    print(json.dumps(document))
    if args.out:
        Path(args.out).write_text(json.dumps(document, indent=2), encoding="utf-8")
        return _manifest(args, [args.input_path, args.keys], [args.out], counters=counters,
                         results={"score": real})
    return None


def cmd_evaluate(args: argparse.Namespace) -> None:
    model = load_model(args.model)
    dataset = load_dataset(Path(args.data) / f"{args.split}.npz")
    if args.quantized:
        scores = quantized_scores(quantize_model(model, scale_bits=args.scale_bits), dataset.features)
    else:
        scores = predict_scores(model, dataset.features)
    trained = read_manifest(args.model)
    epsilon = trained.results.get("epsilon") if trained else None
    delta = trained.results.get("delta") if trained else None
    report = evaluate_scores(scores, dataset.labels, args.threshold, label=args.label or Path(args.model).name,
                             epsilon=epsilon, delta=delta)
    print(format_eval_table([report]))
    print(report_line(report))
    return None


def cmd_bench(args: argparse.Namespace) -> None:
    emodel, params = load_encrypted_model(args.emodel)
    pk = load_public_key(args.keys, params)
    evk = load_evaluation_keys(args.keys, params)
    sk = load_secret_key(args.keys, params) if args.verify else None
    scheme = FvRnsScheme(params)
    if args.row:
        x = _read_row(args.row, args.index)
    else:
        x = np.random.default_rng(args.seed).random(emodel.input_dim)
    rows = bench_encrypted_inference(emodel, scheme, pk, evk, x, trials=args.trials, sk=sk,
                                     workers=args.workers, seed=args.seed)
    print(format_bench_table(rows))
    if args.json:
        for row in rows:
            print(report_line(row))
    return None


def cmd_sweep(args: argparse.Namespace) -> None:
    data_dir = Path(args.data)
    train_set = load_dataset(data_dir / TRAIN_FILE)
    n = len(train_set)
    delta = args.delta if args.delta is not None else 1.0 / n
    sigmas = epsilon_sweep(args.batch / n, _planned_steps(args, n), delta, args.epsilons)
    if not args.train:
        for eps, sigma in sigmas.items():
            print(f"epsilon={eps:<6} delta={delta:.1e} sigma={sigma:.4f}")
        return None

    test_set = load_dataset(data_dir / TEST_FILE)
    reports = []
    for eps, sigma in sigmas.items():
        model, history = train(train_set.features, train_set.labels, _train_config(args, n, sigma, dp=True))
        reports.append(evaluate_scores(
            predict_scores(model, test_set.features), test_set.labels, label=f"eps={eps:g}",
            epsilon=history.epsilon, delta=history.delta,
        ))
    if args.baseline:
        model, _ = train(train_set.features, train_set.labels, _train_config(args, n, None, dp=False))
        reports.append(evaluate_scores(predict_scores(model, test_set.features), test_set.labels,
                                       label="non-private", epsilon=float("inf")))
    print(format_eval_table(reports))
    for report in reports:
        print(report_line(report))
    return None


def cmd_gradnorms(args: argparse.Namespace) -> None:
    train_set = load_dataset(Path(args.data) / TRAIN_FILE)
    scaled, _ = standardize(train_set)
    rows = []
    for label, dataset in (("raw", train_set), ("standardized", scaled)):
        model = init_model(dataset.dimension, args.hidden, seed=args.seed, variant=args.activation)
        rows.append(grad_norm_stats(gradient_norms(model, dataset.features, dataset.labels), label=label))
    print(format_grad_norm_table(rows))
    return None


# -- parser -------------------------------------------------------------

def _add_training_flags(parser: argparse.ArgumentParser, settings: Settings):
    parser.add_argument("--data", required=True, help="Directory with train.npz/test.npz")
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--batch", type=int, default=256, help="Batch size, and lot size under DP")
    parser.add_argument("--activation", choices=sorted(VARIANT_NAMES), default="swish-quant")
    parser.add_argument("--swish-exponents", type=int, nargs="+", default=None,
                        help="Base-2 exponents, ascending powers, for swish-quant (e.g. the approx scan result)")
    parser.add_argument("--hidden", type=int, default=32)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--positive-weight", type=float, default=8.0)
    parser.add_argument("--no-bias", action="store_true")
    parser.add_argument("--clip", type=float, default=1.0, help="Per-example clipping bound C")
    parser.add_argument("--delta", type=float, default=1e-5)
    parser.add_argument("--sampling", choices=[m.value for m in SamplingMode], default=SamplingMode.FIXED.value)
    parser.add_argument("--seed", type=int, default=settings.seed)


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privacare", description=__doc__.strip().splitlines()[-1])
    parser.add_argument("--log-level", default=settings.log_level)
    parser.add_argument("--log-dir", default=settings.log_dir)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="Fit and apply preprocessing to the diabetes CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=settings.seed)
    p.add_argument("--train-ratio", type=float, default=0.75)
    p.add_argument("--group-secondary", action="store_true", help="ICD9-group diag_2 and diag_3")
    p.add_argument("--ordinal-age", action="store_true", help="Age bracket as an ordinal numeric")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="Generate a planted-signal dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--pos-rate", type=float, default=0.1)
    p.add_argument("--signal", type=float, default=4.0)
    p.add_argument("--raw-scale", type=float, default=None, help="Multiply columns by factors up to this")
    p.add_argument("--train-ratio", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=settings.seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="Train the MLP, optionally with DP-SGD")
    _add_training_flags(p, settings)
    p.add_argument("--dp", action="store_true")
    p.add_argument("--sigma", type=float, default=None, help="Noise multiplier")
    p.add_argument("--target-eps", type=float, default=None, help="Pick sigma reaching this epsilon")
    p.add_argument("--eps-budget", type=float, default=None, help="Stop before epsilon exceeds this")
    p.add_argument("--log", default=None, help="JSON-lines training log")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("approx", help="Minimax and base-2 approximation of swish")
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--interval-a", type=float, default=None)
    p.add_argument("--bound", type=float, default=None, help="Error bound K")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--calibrate", action="store_true", help="Pick the interval by calibration first")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("keygen", help="Generate parameters and keys")
    p.add_argument("--n", type=int, default=settings.ring_dimension)
    p.add_argument("--plain-bits", type=int, default=None)
    p.add_argument("--coeff-count", type=int, default=None)
    p.add_argument("--seed", type=int, default=settings.seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("encrypt-model", help="Quantize a model for encrypted inference")
    p.add_argument("--model", required=True)
    p.add_argument("--keys", required=True)
    p.add_argument("--scale-bits", type=int, default=settings.weight_bits)
    p.add_argument("--input-bits", type=int, default=settings.input_bits)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encrypt_model)

    p = sub.add_parser("encrypt-input", help="Encrypt one feature row")
    p.add_argument("--row", required=True, help="Comma-separated row, or a .npz dataset with --index")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--keys", required=True)
    p.add_argument("--input-bits", type=int, default=settings.input_bits)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encrypt_input)

    p = sub.add_parser("infer", help="Evaluate the encrypted model on encrypted features")
    p.add_argument("--emodel", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--keys", required=True, help="Key directory; only evaluation keys are read")
    p.add_argument("--path", choices=[PATH_SHIFT, PATH_GENERIC], default=PATH_SHIFT)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("decrypt", help="Decrypt and decode an encrypted score")
    p.add_argument("--keys", required=True)
    p.add_argument("--in", dest="input_path", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("evaluate", help="Accuracy, AUC and recall of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--quantized", action="store_true", help="Score with the fixed-point forward pass")
    p.add_argument("--scale-bits", type=int, default=settings.weight_bits)
    p.add_argument("--label", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="Time encrypted inference per activation variant")
    p.add_argument("--emodel", required=True)
    p.add_argument("--keys", required=True)
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--row", default=None)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--verify", action="store_true", help="Check outputs with the secret key")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=settings.seed)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="Noise multipliers (and optionally models) for several epsilons")
    _add_training_flags(p, settings)
    p.add_argument("--epsilons", type=float, nargs="+", default=list(SWEEP_EPSILONS))
    p.add_argument("--train", action="store_true", help="Train and evaluate one model per epsilon")
    p.add_argument("--baseline", action="store_true", help="Add a non-private row")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradnorms", help="Per-example gradient norms with and without scaling")
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--activation", choices=sorted(VARIANT_NAMES), default="swish-quant")
    p.add_argument("--seed", type=int, default=settings.seed)
    p.set_defaults(func=cmd_gradnorms)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand

    Args:
        argv: Arguments without the program name

    Returns:
        Exit code: 0 on success, 1 on a pipeline error, 2 on a usage error
    """
    settings = get_settings()
    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    setup_logging(log_level=args.log_level, log_dir=args.log_dir)
    started = time.perf_counter()
    try:
        manifest = args.func(args)
        if manifest is not None:
            manifest = manifest.model_copy(update={"wallclock_seconds": time.perf_counter() - started})
            _write_manifests(manifest)
    except MODULE_ERRORS as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"privacare {args.command}: error: {e}", file=sys.stderr)
        return 1
    run_logger.log_stage(args.command, "total", time.perf_counter() - started)
    return 0


def main():
    load_dotenv()
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
