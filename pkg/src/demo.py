"""Image encryption demo: simulate, estimate, reconcile, encrypt, decrypt."""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from core import BinaryImage, ErrorEstimate, ImageRenderer, KeyLengthError, OutputWriter, get_logger

from .config import RunConfig
from .keyrate import RateReport, rate_report
from .postprocess import (
    CorrectionRow,
    ParityCheckMatrix,
    error_correction_table,
    privacy_amplify,
    reconcile_keys,
)
from .protocol import estimate_errors, run_protocol

logger = get_logger(__name__)


def xor_cipher(image: BinaryImage, key: np.ndarray) -> BinaryImage:
    """pixel_i xor key_i; applying it twice with the same key restores the image."""
    key = np.asarray(key, dtype=np.uint8).reshape(-1)
    if key.size < image.num_pixels:
        raise KeyLengthError(image.num_pixels, key.size, what="image")
    return BinaryImage(
        width=image.width,
        height=image.height,
        pixels=image.pixels ^ key[:image.num_pixels],
    )


class PartyOutcome(BaseModel):
    """Decryption quality for one receiving party."""
    party: str
    raw_key_error: float
    residual_key_error: float
    raw_pixel_errors: int
    corrected_pixel_errors: int
    raw_pixel_error_rate: float
    corrected_pixel_error_rate: float
    failed_blocks: int


class DemoReport(BaseModel):
    num_keygen: int
    num_verif: int
    image_pixels: int
    errors: ErrorEstimate
    parties: List[PartyOutcome]
    leakage_bits: int
    rates: RateReport
    final_key_length: int
    final_keys_agree: Optional[bool] = None
    correction_table: List[CorrectionRow] = []


def demo_pipeline(
    config: RunConfig,
    image: BinaryImage,
    writer: Optional[OutputWriter] = None,
    include_table: bool = False,
    code: Optional[ParityCheckMatrix] = None,
) -> DemoReport:
    """
    Run the full chain on one image; Alice encrypts, Bob and Charlie decrypt.

    `code` replaces the generated LDPC code, and its k/N replaces config.rate.
    """
    rate = code.rate if code is not None else config.rate
    transcript = run_protocol(config.protocol_params(), config.noise_model())
    if transcript.num_keygen < image.num_pixels:
        raise KeyLengthError(image.num_pixels, transcript.num_keygen, what="image")

    estimate = estimate_errors(transcript)
    crossover = estimate.q_keygen_max
    key_a = transcript.key_a
    cipher = xor_cipher(image, key_a)

    tiles = [("plain", image), ("cipher", cipher)]
    parties, corrected_keys = [], []
    leakage = 0
    for party, raw_key in (("B", transcript.key_b), ("C", transcript.key_c)):
        rec = reconcile_keys(
            key_a, raw_key, rate, config.block_n, crossover,
            seed=config.code_seed, max_iters=config.max_iters, column_weight=config.column_weight,
            code=code,
        )
        leakage += rec.leakage_bits
        corrected_keys.append(rec.corrected_key)
        raw_plain = xor_cipher(cipher, raw_key)
        fixed_plain = xor_cipher(cipher, rec.corrected_key)
        raw_errors = image.count_differences(raw_plain)
        fixed_errors = image.count_differences(fixed_plain)
        parties.append(PartyOutcome(
            party=party,
            raw_key_error=rec.raw_error_rate,
            residual_key_error=rec.residual_error_rate,
            raw_pixel_errors=raw_errors,
            corrected_pixel_errors=fixed_errors,
            raw_pixel_error_rate=raw_errors / image.num_pixels,
            corrected_pixel_error_rate=fixed_errors / image.num_pixels,
            failed_blocks=rec.failed_blocks,
        ))
        tiles.extend([(f"{party} raw", raw_plain), (f"{party} corrected", fixed_plain)])
        logger.info("party %s: %d wrong pixels raw, %d after correction", party, raw_errors, fixed_errors)

    rates = rate_report(
        estimate.q_verif, estimate.q_keygen_max, config.total_rounds, config.p, config.eps_s,
        sigma_verif=estimate.std_verif, sigma_keygen=estimate.std_keygen_max,
    )

    final_length = min(rates.secret_key_length, len(key_a))
    agree = None
    if final_length > 0:
        finals = [privacy_amplify(k, final_length, config.random_seed) for k in (key_a, *corrected_keys)]
        agree = all(np.array_equal(finals[0], f) for f in finals[1:])
        logger.info("privacy amplification: %d -> %d bits", len(key_a), final_length)
    else:
        logger.warning("finite key rate %s is not positive; privacy amplification skipped", rates.fkr)

    table = []
    if include_table:
        table = error_correction_table(
            key_a, transcript.key_b, transcript.key_c, config.block_n, crossover,
            seed=config.code_seed, max_iters=config.max_iters, column_weight=config.column_weight,
            codes={rate: code} if code is not None else None,
        )

    report = DemoReport(
        num_keygen=transcript.num_keygen,
        num_verif=transcript.num_verif,
        image_pixels=image.num_pixels,
        errors=estimate,
        parties=parties,
        leakage_bits=leakage,
        rates=rates,
        final_key_length=final_length,
        final_keys_agree=agree,
        correction_table=table,
    )

    if writer is not None:
        writer.write_image("plain.pbm", image)
        writer.write_image("cipher.pbm", cipher)
        for label, img in tiles[2:]:
            party, kind = label.split()
            writer.write_image(f"decrypted_{party}_{kind}.pbm", img)
        writer.write_png("panel.png", ImageRenderer().render_panel(tiles))
        writer.write_json("report.json", report.model_dump(mode="json"))
    return report
