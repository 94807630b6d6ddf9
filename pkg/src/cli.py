"""
Command-line front end.

    cka-toolkit simulate  --rounds 44827 --p 0.1 --seed 7 --out runs/a
    cka-toolkit rates     --rounds 100000 --visibility 0.8368
    cka-toolkit reconcile --input runs/a --rate 1/2
    cka-toolkit reconcile --input runs/a --matrix h.txt
    cka-toolkit keyrate   --q-verif 0.112 --q-keygen 0.0959
    cka-toolkit encrypt   --input runs/a --image data/test_image.pbm
    cka-toolkit decrypt   --input runs/a --party B --corrected
    cka-toolkit demo      --visibility 0.8082 --out runs/demo

Settings resolve as defaults < --config file < explicit flags.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from core import ImageRenderer, OutputWriter, ToolkitError, configure_logging, get_logger
from core.errors import EstimationError

from .config import RunConfig
from .demo import demo_pipeline, xor_cipher
from .keyrate import fkr_surface, optimal_p_curve, rate_report
from .postprocess import CodeRate, ParityCheckMatrix, error_correction_table, load_matrix, reconcile_keys
from .protocol import (
    ConferenceKeyProtocol,
    estimate_errors,
    measure_success_rates,
    transcript_to_text,
)
from .quantum_core import NoiseKind
from .settings import Configuration

logger = get_logger(__name__)

BUNDLED_IMAGE = Path(__file__).resolve().parent.parent / "data" / "test_image.pbm"
KEY_INDEX = "keys.json"
SURFACE_ROUNDS = np.unique(np.logspace(4, 12, 33).astype(np.int64))
SURFACE_PS = np.geomspace(1e-5, 0.5, 40)

EXIT_OK, EXIT_TOOLKIT, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    """Flags are individually valid but do not fit together."""


# ══════════════════════════════════════════════════════════════════════════════
#  ARGUMENTS
# ══════════════════════════════════════════════════════════════════════════════

def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="Random seed (0 <= seed < 2^64)")
    common.add_argument("--p", type=float, help="Verification probability")
    common.add_argument("--rounds", type=int, help="Total rounds L")
    common.add_argument("--configuration", choices=[c.value for c in Configuration])
    common.add_argument("--visibility", type=float, help="White-noise visibility; implies noisy sampling")
    common.add_argument("--rate", choices=[r.value for r in CodeRate], help="LDPC code rate k/N")
    common.add_argument("--block-n", type=int, choices=[16200, 64800], help="LDPC block length")
    common.add_argument("--eps", type=float, help="Security level eps_S")
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="cka-toolkit", description="Anonymous conference key agreement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="Run the protocol and export keys")

    sub.add_parser("rates", parents=[common],
                   help="Success rate of every configuration and round type; --rounds counts per setting")

    rec = sub.add_parser("reconcile", parents=[common], help="LDPC-correct Bob's and Charlie's keys")
    rec.add_argument("--input", type=Path, help="Run directory with keys (default: --out)")
    rec.add_argument("--crossover", type=float, help="Channel prior (default: estimated Q_keygen)")
    rec.add_argument("--table", action="store_true", help="Also reconcile at every code rate")
    rec.add_argument("--matrix", type=Path, help="Parity-check matrix file; its k/N sets the rate")

    kr = sub.add_parser("keyrate", parents=[common], help="Asymptotic and finite key rates")
    kr.add_argument("--input", type=Path, help="Run directory with errors.json")
    kr.add_argument("--q-verif", type=float)
    kr.add_argument("--q-keygen", type=float, help="max of the pairwise key-generation error rates")
    kr.add_argument("--sigma-verif", type=float, default=0.0)
    kr.add_argument("--sigma-keygen", type=float, default=0.0)

    for name, verb in (("encrypt", "Encrypt"), ("decrypt", "Decrypt")):
        cmd = sub.add_parser(name, parents=[common], help=f"{verb} a PBM image with a key file")
        cmd.add_argument("--input", type=Path, help="Run directory with keys (default: --out)")
        cmd.add_argument("--image", type=Path, help="PBM image (default: bundled image / cipher.pbm)")
        cmd.add_argument("--party", choices=["A", "B", "C"], default="A" if name == "encrypt" else "B")
        cmd.add_argument("--corrected", action="store_true", help="Use the reconciled key")
        cmd.add_argument("--plain", action="store_true", help="Write P1 instead of P4")

    demo = sub.add_parser("demo", parents=[common], help="Full pipeline on an image")
    demo.add_argument("--image", type=Path, default=BUNDLED_IMAGE)
    demo.add_argument("--table", action="store_true", help="Include the per-rate correction table")
    demo.add_argument("--matrix", type=Path, help="Parity-check matrix file; its k/N sets the rate")
    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the --config file, then explicit flags."""
    values = json.loads(args.config.read_text()) if args.config else {}
    flags = {
        "random_seed": args.seed,
        "p": args.p,
        "total_rounds": args.rounds,
        "configuration": args.configuration,
        "visibility": args.visibility,
        "rate": args.rate,
        "block_n": args.block_n,
        "eps_s": args.eps,
        "output_dir": args.out,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.visibility is not None:
        values["noise_kind"] = NoiseKind.WHITE.value
    return RunConfig.model_validate(values)


# ══════════════════════════════════════════════════════════════════════════════
#  KEY FILES
# ══════════════════════════════════════════════════════════════════════════════

def _key_index(directory: Path) -> Dict[str, int]:
    path = directory / KEY_INDEX
    return OutputWriter.read_json(path) if path.exists() else {}


def _write_keys(writer: OutputWriter, keys: Dict[str, np.ndarray], reset: bool = False) -> None:
    """Write bit files and record their lengths; `reset` drops entries of earlier runs."""
    index = {} if reset else _key_index(writer.output_dir)
    for name, bits in keys.items():
        writer.write_key(name, bits)
        index[name] = int(len(bits))
    writer.write_json(KEY_INDEX, index)


def _read_key(directory: Path, name: str) -> np.ndarray:
    index = _key_index(directory)
    if name not in index:
        raise UsageError(f"{directory / KEY_INDEX} lists no key {name}")
    return OutputWriter.read_key(directory / name, index[name])


def _key_name(party: str, corrected: bool) -> str:
    if corrected and party == "A":
        raise UsageError("Alice's key is the reference and has no corrected version")
    return f"key_{party}_corrected.bin" if corrected else f"key_{party}.bin"


# ══════════════════════════════════════════════════════════════════════════════
#  COMMANDS
# ══════════════════════════════════════════════════════════════════════════════

def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> dict:
    writer = OutputWriter(config.output_dir)
    transcript = ConferenceKeyProtocol(config.protocol_params(), config.noise_model()).run()
    writer.write_text("config.json", config.to_json() + "\n")
    writer.write_text("transcript.csv", transcript_to_text(transcript))
    _write_keys(writer, {"key_A.bin": transcript.key_a, "key_B.bin": transcript.key_b,
                         "key_C.bin": transcript.key_c}, reset=True)
    summary = {"num_keygen": transcript.num_keygen, "num_verif": transcript.num_verif}
    try:
        estimate = estimate_errors(transcript)
    except EstimationError as exc:
        logger.warning("no error estimate: %s", exc)
    else:
        writer.write_json("errors.json", estimate.model_dump(mode="json"))
        summary.update(q_verif=estimate.q_verif, q_keygen=estimate.q_keygen,
                       q_keygen_max=estimate.q_keygen_max)
    return summary


def cmd_rates(args: argparse.Namespace, config: RunConfig) -> dict:
    writer = OutputWriter(config.output_dir)
    results = measure_success_rates(config.noise_model(), config.total_rounds, config.random_seed)
    rows = [dict(r.model_dump(mode="json"), rate=r.rate, std=r.std) for r in results]
    writer.write_json("success_rates.json", rows)
    return {f"{r['configuration']}/{r['round_type']}": round(r["rate"], 6) for r in rows}


def cmd_reconcile(args: argparse.Namespace, config: RunConfig) -> dict:
    source = args.input or config.output_dir
    writer = OutputWriter(config.output_dir)
    key_a = _read_key(source, "key_A.bin")
    crossover = args.crossover
    if crossover is None:
        errors_path = source / "errors.json"
        if not errors_path.exists():
            raise UsageError("pass --crossover or run simulate first (errors.json missing)")
        errors = OutputWriter.read_json(errors_path)
        crossover = max(errors["q_keygen_ab"], errors["q_keygen_ac"])

    code = _load_code(args)
    rate = code.rate if code is not None else config.rate
    summary, bits = {"rate": rate.value, "crossover": crossover}, {}
    if code is not None:
        summary["matrix"] = str(args.matrix)
    for party in ("B", "C"):
        result = reconcile_keys(
            key_a, _read_key(source, f"key_{party}.bin"), rate, config.block_n, crossover,
            seed=config.code_seed, max_iters=config.max_iters, column_weight=config.column_weight,
            code=code,
        )
        bits[f"key_{party}_corrected.bin"] = result.corrected_key
        bits["parity_A.bin"] = result.parity
        summary[party] = result.model_dump(mode="json", exclude={"corrected_key", "parity"})
    if args.table:
        table = error_correction_table(
            key_a, _read_key(source, "key_B.bin"), _read_key(source, "key_C.bin"),
            config.block_n, crossover, seed=config.code_seed, max_iters=config.max_iters,
            column_weight=config.column_weight, codes={rate: code} if code is not None else None,
        )
        summary["table"] = [row.model_dump(mode="json") for row in table]
    _write_keys(writer, bits)
    writer.write_json("reconcile.json", summary)
    return summary


def _load_code(args: argparse.Namespace) -> Optional[ParityCheckMatrix]:
    if args.matrix is None:
        return None
    code = load_matrix(args.matrix)
    if args.rate is not None and args.rate != code.rate.value:
        raise UsageError(f"--rate {args.rate} conflicts with the matrix (k/N = {code.rate.value})")
    return code


def cmd_keyrate(args: argparse.Namespace, config: RunConfig) -> dict:
    q_verif, q_keygen = args.q_verif, args.q_keygen
    sigma_verif, sigma_keygen = args.sigma_verif, args.sigma_keygen
    if (q_verif is None or q_keygen is None) and args.input is not None:
        errors = OutputWriter.read_json(args.input / "errors.json")
        if q_verif is None:
            q_verif, sigma_verif = errors["q_verif"], errors["std_verif"]
        if q_keygen is None:
            use_ab = errors["q_keygen_ab"] >= errors["q_keygen_ac"]
            q_keygen = errors["q_keygen_ab"] if use_ab else errors["q_keygen_ac"]
            sigma_keygen = errors["std_keygen_ab"] if use_ab else errors["std_keygen_ac"]
    if q_verif is None or q_keygen is None:
        raise UsageError("keyrate needs --q-verif and --q-keygen, or --input with errors.json")

    writer = OutputWriter(config.output_dir)
    report = rate_report(q_verif, q_keygen, config.total_rounds, config.p, config.eps_s,
                         sigma_verif=sigma_verif, sigma_keygen=sigma_keygen)
    writer.write_csv("keyrate.csv", ["L", "p", "FKR"],
                     fkr_surface(q_verif, q_keygen, SURFACE_ROUNDS, SURFACE_PS, config.eps_s))
    writer.write_csv("keyrate_optimal.csv", ["L", "p_star", "FKR_star"],
                     optimal_p_curve(q_verif, q_keygen, SURFACE_ROUNDS, config.eps_s))
    summary = report.model_dump(mode="json")
    writer.write_json("keyrate_summary.json", summary)
    return summary


def cmd_encrypt(args: argparse.Namespace, config: RunConfig) -> dict:
    return _apply_cipher(args, config, default_image=BUNDLED_IMAGE, output="cipher.pbm")


def cmd_decrypt(args: argparse.Namespace, config: RunConfig) -> dict:
    source = args.input or config.output_dir
    suffix = "_corrected" if args.corrected else ""
    return _apply_cipher(args, config, default_image=source / "cipher.pbm",
                         output=f"decrypted_{args.party}{suffix}.pbm")


def _apply_cipher(args: argparse.Namespace, config: RunConfig, default_image: Path, output: str) -> dict:
    source = args.input or config.output_dir
    key = _read_key(source, _key_name(args.party, args.corrected))
    image = ImageRenderer.read_pbm(args.image or default_image)
    writer = OutputWriter(config.output_dir)
    path = writer.write_image(output, xor_cipher(image, key), plain=args.plain)
    return {"image": str(path), "pixels": image.num_pixels, "key_bits": int(len(key))}


def cmd_demo(args: argparse.Namespace, config: RunConfig) -> dict:
    writer = OutputWriter(config.output_dir)
    writer.write_text("config.json", config.to_json() + "\n")
    code = _load_code(args)
    report = demo_pipeline(config, ImageRenderer.read_pbm(args.image), writer, include_table=args.table, code=code)
    return {
        "num_keygen": report.num_keygen,
        "num_verif": report.num_verif,
        "q_verif": report.errors.q_verif,
        "q_keygen_max": report.errors.q_keygen_max,
        **{f"{p.party}_raw_pixel_error": p.raw_pixel_error_rate for p in report.parties},
        **{f"{p.party}_corrected_pixel_error": p.corrected_pixel_error_rate for p in report.parties},
        "fkr": report.rates.fkr,
        "final_key_length": report.final_key_length,
    }


COMMANDS = {
    "simulate": cmd_simulate,
    "rates": cmd_rates,
    "reconcile": cmd_reconcile,
    "keyrate": cmd_keyrate,
    "encrypt": cmd_encrypt,
    "decrypt": cmd_decrypt,
    "demo": cmd_demo,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.verbose)

    try:
        config = build_config(args)
        summary = COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"cka-toolkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ToolkitError as exc:
        print(f"cka-toolkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_TOOLKIT
    except (ValidationError, json.JSONDecodeError) as exc:
        print(f"cka-toolkit {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cka-toolkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO

    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
