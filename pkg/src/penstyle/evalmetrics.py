"""Corpus evaluation: clipped n-gram BLEU and end-of-sequence correlation.

BLEU here is computed separately over the direction-code and speed-code
sequences. Corpus-level n-gram precision clips each candidate's n-gram
counts to its single paired reference; the score applies the standard
exponential brevity penalty and the geometric mean of the precisions
(a literal-product variant is available for comparison with the plain
product form). EoS analysis correlates the two corpora's length
histograms (one bin per time step, lengths >= 100 share the cap bin).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

# Published full-scale results from the original study on the licensed
# dataset; recorded for orientation only, not reproduced at desk scale.
FULL_SCALE_REFERENCE = {
    "known_writers": {
        "baseline": {"speed": (51.5, 41.4, 25.1), "dir": (56.7, 39.4, 28.3)},
        "autoencoder": {"speed": (71.0, 51.7, 32.3), "dir": (65.6, 51.5, 38.7)},
    },
    "transfer": {
        "baseline": {"speed": (55.4, 39.6, 25.3), "dir": (50.2, 38.6, 27.7)},
        "autoencoder": {"speed": (72.4, 52.4, 32.2), "dir": (70.4, 55.6, 42.1)},
    },
    "eos_pearson": {
        "known_writers": {"baseline": 0.55, "autoencoder": 0.99},
        "transfer": {"baseline": 0.5, "autoencoder": 0.99},
    },
}

EOS_BINS = 100  # lengths 1..99 plus a shared cap bin


class PairingError(ValueError):
    """Generated and reference corpora do not pair one-to-one."""

    def __init__(self, message, orphans=()):
        super().__init__(message)
        self.orphans = list(orphans)


class DegenerateDistributionError(ValueError):
    """A correlation input has zero variance, so r is undefined."""


def _ngrams(seq, n) -> Counter:
    seq = list(seq)
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def ngram_overlap(references, candidates, n) -> tuple:
    """(clipped, total) corpus n-gram counts of candidates vs paired refs."""
    if len(references) != len(candidates):
        raise ValueError("references and candidates must pair one-to-one")
    if n < 1:
        raise ValueError("n must be at least 1")
    clipped = 0
    total = 0
    for ref, cand in zip(references, candidates):
        cand_counts = _ngrams(cand, n)
        ref_counts = _ngrams(ref, n)
        for gram, count in cand_counts.items():
            clipped += min(count, ref_counts[gram])
            total += count
    return clipped, total


def bleu(references, candidates, n) -> float:
    """Corpus-level clipped n-gram precision in [0, 1].

    Undefined precisions (no candidate has an n-gram of this order)
    report 0.0; bleu_precisions exposes the definedness flag.
    """
    if not references:
        raise ValueError("empty corpus")
    clipped, total = ngram_overlap(references, candidates, n)
    return clipped / total if total > 0 else 0.0


def bleu_precisions(references, candidates, max_n) -> list:
    """[(precision, defined)] for n = 1..max_n."""
    if not references:
        raise ValueError("empty corpus")
    out = []
    for n in range(1, max_n + 1):
        clipped, total = ngram_overlap(references, candidates, n)
        out.append((clipped / total if total > 0 else 0.0, total > 0))
    return out


def brevity_penalty(len_ref, len_gen) -> float:
    """min(1, exp(1 - L_R / L_G)): < 1 only when generation runs short."""
    if len_gen <= 0:
        return 0.0
    return min(1.0, float(np.exp(1.0 - len_ref / len_gen)))


def bleu_score(references, candidates, max_n=3, literal_product=False) -> float:
    """Score_N as a percentage: BP times the combined n-gram precisions.

    The default combines precisions with the standard geometric mean
    (prod ** (1/N)); literal_product=True uses the bare product instead.
    """
    precisions = [p for p, _ in bleu_precisions(references, candidates, max_n)]
    len_ref = sum(len(r) for r in references)
    len_gen = sum(len(c) for c in candidates)
    bp = brevity_penalty(len_ref, len_gen)
    prod = float(np.prod(precisions))
    if prod == 0.0:
        return 0.0
    combined = prod if literal_product else prod ** (1.0 / max_n)
    return 100.0 * bp * combined


def length_histogram(lengths, n_bins=EOS_BINS) -> np.ndarray:
    """Counts over bins 1..n_bins-1 plus the cap bin for longer sequences."""
    hist = np.zeros(n_bins)
    for ln in lengths:
        if ln < 1:
            raise ValueError("sequence lengths must be at least 1")
        hist[min(int(ln), n_bins) - 1] += 1
    return hist


def eos_pearson(gen_lengths, ref_lengths) -> float:
    """Pearson r between the two normalized length histograms."""
    gen_lengths = list(gen_lengths)
    ref_lengths = list(ref_lengths)
    if not gen_lengths or not ref_lengths:
        raise ValueError("length lists must be non-empty")
    g = length_histogram(gen_lengths)
    r = length_histogram(ref_lengths)
    g = g / g.sum()
    r = r / r.sum()
    if np.ptp(g) == 0.0 or np.ptp(r) == 0.0:
        raise DegenerateDistributionError("a length histogram has zero variance")
    return float(np.corrcoef(g, r)[0, 1])


@dataclass(frozen=True)
class FeatureBleu:
    scores: tuple  # Score_1..Score_N as percentages
    precisions: tuple  # BLEU_n precisions in [0, 1]
    defined: tuple  # per-n flag: any candidate n-gram existed
    len_ref: int
    len_gen: int


@dataclass(frozen=True)
class EvalReport:
    dir: FeatureBleu
    speed: FeatureBleu
    eos_pearson: float
    n_pairs: int

    def to_json(self) -> str:
        """The documented report schema; percent values carry one decimal."""
        obj = {
            "bleu": {
                "dir": {f"b{i + 1}": round(s, 1) for i, s in enumerate(self.dir.scores)},
                "speed": {f"b{i + 1}": round(s, 1) for i, s in enumerate(self.speed.scores)},
            },
            "eos_pearson": self.eos_pearson,
            "n_pairs": self.n_pairs,
        }
        return json.dumps(obj)


def _feature_bleu(references, candidates, max_n) -> FeatureBleu:
    pres = bleu_precisions(references, candidates, max_n)
    scores = tuple(
        bleu_score(references, candidates, max_n=n) for n in range(1, max_n + 1)
    )
    return FeatureBleu(
        scores=scores,
        precisions=tuple(p for p, _ in pres),
        defined=tuple(d for _, d in pres),
        len_ref=sum(len(r) for r in references),
        len_gen=sum(len(c) for c in candidates),
    )


def evaluate_corpus(reference, generated, max_n=3) -> EvalReport:
    """Score a generated corpus against its references.

    Both arguments map (writer_id, letter) -> (dir_codes, speed_codes).
    Keys must match exactly; orphans on either side raise PairingError.
    """
    ref_keys = set(reference)
    gen_keys = set(generated)
    orphans = sorted(ref_keys ^ gen_keys)
    if orphans or not ref_keys:
        raise PairingError(
            f"{len(orphans)} unpaired sequence(s)" if orphans else "empty corpus",
            orphans=orphans,
        )
    keys = sorted(ref_keys)
    ref_dir = [list(np.asarray(reference[k][0]).tolist()) for k in keys]
    gen_dir = [list(np.asarray(generated[k][0]).tolist()) for k in keys]
    ref_speed = [list(np.asarray(reference[k][1]).tolist()) for k in keys]
    gen_speed = [list(np.asarray(generated[k][1]).tolist()) for k in keys]
    return EvalReport(
        dir=_feature_bleu(ref_dir, gen_dir, max_n),
        speed=_feature_bleu(ref_speed, gen_speed, max_n),
        eos_pearson=eos_pearson([len(c) for c in gen_dir], [len(r) for r in ref_dir]),
        n_pairs=len(keys),
    )


def format_table(reports: dict, max_n=3) -> str:
    """Fixed-width comparison table, one row per named report."""
    header_n = "".join(f"B-{i + 1}".rjust(7) for i in range(max_n))
    lines = [
        "Aspect/Feature".ljust(24) + "Speed".center(7 * max_n) + "  " + "Dir".center(7 * max_n),
        "Model / B-score".ljust(24) + header_n + "  " + header_n,
    ]
    for name, report in reports.items():
        row = name.ljust(24)
        row += "".join(f"{s:7.1f}" for s in report.speed.scores)
        row += "  "
        row += "".join(f"{s:7.1f}" for s in report.dir.scores)
        lines.append(row)
    lines.append("")
    for name, report in reports.items():
        lines.append(f"EoS Pearson ({name}): {report.eos_pearson:.2f}")
    return "\n".join(lines)
