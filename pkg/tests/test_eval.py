import itertools
import json
import math
from collections import Counter

import numpy as np
import pytest

from penstyle import evalmetrics
from penstyle.evalmetrics import (
    DegenerateDistributionError,
    EvalReport,
    FULL_SCALE_REFERENCE,
    PairingError,
    bleu,
    bleu_precisions,
    bleu_score,
    brevity_penalty,
    eos_pearson,
    evaluate_corpus,
)


def brute_force_precision(references, candidates, n):
    """Independent oracle: explicit n-gram lists, Counter clipping."""
    clipped = total = 0
    for ref, cand in zip(references, candidates):
        cand_grams = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
        ref_grams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
        ref_counts = Counter(ref_grams)
        for gram, count in Counter(cand_grams).items():
            clipped += min(count, ref_counts.get(gram, 0))
        total += len(cand_grams)
    return clipped, total


class TestBleu:
    def test_identity_precision_one(self, rng):
        refs = [list(rng.integers(0, 4, size=int(rng.integers(3, 9)))) for _ in range(6)]
        for n in (1, 2, 3):
            assert bleu(refs, refs, n) == 1.0

    def test_hand_case(self):
        refs = [[0, 1, 2, 3]]
        cands = [[0, 1, 7, 3]]
        assert bleu(refs, cands, 1) == pytest.approx(3 / 4)
        assert bleu(refs, cands, 2) == pytest.approx(1 / 3)

    def test_disjoint_alphabets(self):
        assert bleu([[0, 1, 0]], [[2, 3, 2]], 1) == 0.0

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            bleu([], [], 1)

    def test_n_longer_than_candidates_flagged(self):
        pres = bleu_precisions([[0, 1, 2, 3]], [[1, 2]], 3)
        assert pres[2] == (0.0, False)
        assert pres[1][1] is True

    def test_matches_brute_force_exhaustive(self, rng):
        # Random corpora over a 4-symbol alphabet, lengths <= 8, <= 10 pairs.
        for _ in range(300):
            n_pairs = int(rng.integers(1, 11))
            refs = [list(rng.integers(0, 4, size=int(rng.integers(1, 9)))) for _ in range(n_pairs)]
            cands = [list(rng.integers(0, 4, size=int(rng.integers(1, 9)))) for _ in range(n_pairs)]
            for n in (1, 2, 3):
                clipped, total = brute_force_precision(refs, cands, n)
                expected = clipped / total if total else 0.0
                assert bleu(refs, cands, n) == pytest.approx(expected, abs=1e-12)

    def test_matches_brute_force_all_short_pairs(self):
        # Exhaustive: every (ref, cand) pair over alphabet {0,1}, lengths <= 4.
        seqs = [list(s) for ln in (1, 2, 3, 4) for s in itertools.product((0, 1), repeat=ln)]
        for ref in seqs:
            for cand in seqs:
                for n in (1, 2, 3):
                    clipped, total = brute_force_precision([ref], [cand], n)
                    expected = clipped / total if total else 0.0
                    assert bleu([ref], [cand], n) == pytest.approx(expected, abs=1e-12)

    def test_order_invariant_over_pairs(self, rng):
        refs = [list(rng.integers(0, 4, size=6)) for _ in range(8)]
        cands = [list(rng.integers(0, 4, size=6)) for _ in range(8)]
        perm = list(rng.permutation(8))
        for n in (1, 2, 3):
            assert bleu(refs, cands, n) == pytest.approx(
                bleu([refs[i] for i in perm], [cands[i] for i in perm], n)
            )


class TestBleuScore:
    def test_perfect_equal_lengths_100(self, rng):
        refs = [list(rng.integers(0, 4, size=7)) for _ in range(5)]
        assert bleu_score(refs, refs, 3) == pytest.approx(100.0)

    def test_half_length_brevity_penalty(self):
        # Candidates are perfect prefixes at half length except precision
        # stays 1.0: use single-symbol sequences so all n-grams match.
        refs = [[1] * 8] * 4
        cands = [[1] * 4] * 4
        score = bleu_score(refs, cands, 1)
        assert score == pytest.approx(100.0 * math.exp(-1.0))

    def test_brevity_penalty_formula(self):
        assert brevity_penalty(10, 5) == pytest.approx(math.exp(-1.0))
        assert brevity_penalty(10, 20) == 1.0
        assert brevity_penalty(10, 10) == 1.0

    def test_score_bounds(self, rng):
        for _ in range(50):
            refs = [list(rng.integers(0, 4, size=int(rng.integers(1, 9)))) for _ in range(4)]
            cands = [list(rng.integers(0, 4, size=int(rng.integers(1, 9)))) for _ in range(4)]
            s = bleu_score(refs, cands, 3)
            assert 0.0 <= s <= 100.0

    def test_literal_product_variant(self, rng):
        refs = [[0, 1, 2, 3, 0, 1]] * 3
        cands = [[0, 1, 2, 0, 1, 3]] * 3
        standard = bleu_score(refs, cands, 3)
        literal = bleu_score(refs, cands, 3, literal_product=True)
        pres = [p for p, _ in bleu_precisions(refs, cands, 3)]
        prod = np.prod(pres)
        assert literal == pytest.approx(100.0 * prod)
        assert standard == pytest.approx(100.0 * prod ** (1 / 3))

    def test_published_reference_constants(self):
        known = FULL_SCALE_REFERENCE["known_writers"]
        assert known["autoencoder"]["speed"][2] == 32.3
        assert known["autoencoder"]["dir"][2] == 38.7
        assert FULL_SCALE_REFERENCE["eos_pearson"]["known_writers"] == {
            "baseline": 0.55, "autoencoder": 0.99,
        }


class TestEosPearson:
    def test_identical_multisets(self):
        lengths = [3, 5, 5, 9, 22, 40]
        assert eos_pearson(lengths, list(lengths)) == pytest.approx(1.0)

    def test_hand_histogram_case(self):
        # Three occupied bins; oracle is the closed-form Pearson below.
        gen = [1, 1, 2, 3]
        ref = [1, 2, 2, 3]
        g = np.zeros(100)
        r = np.zeros(100)
        for v in gen:
            g[v - 1] += 1
        for v in ref:
            r[v - 1] += 1
        g /= g.sum()
        r /= r.sum()
        expected = (np.mean(g * r) - g.mean() * r.mean()) / (g.std() * r.std())
        assert eos_pearson(gen, ref) == pytest.approx(expected, abs=1e-12)

    def test_symmetric(self, rng):
        a = list(rng.integers(1, 60, size=30))
        b = list(rng.integers(1, 60, size=25))
        assert eos_pearson(a, b) == pytest.approx(eos_pearson(b, a))

    def test_identical_single_bin_spikes_correlate(self):
        assert eos_pearson([5, 5, 5], [5, 5, 5]) == pytest.approx(1.0)

    def test_zero_variance_raises(self):
        # A flat frequency vector (every bin equally occupied) has no
        # variance, so r is undefined and must raise instead of NaN.
        flat = list(range(1, 101))
        with pytest.raises(DegenerateDistributionError):
            eos_pearson(flat, [3, 5, 9])

    def test_cap_bin_shares_100_plus(self):
        assert eos_pearson([100, 100, 3], [100, 100, 3]) == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            eos_pearson([], [1, 2])


class TestEvaluateCorpus:
    def _codes(self, rng, keys, length=6):
        return {
            k: (list(rng.integers(0, 16, size=length)), list(rng.integers(0, 16, size=length)))
            for k in keys
        }

    def test_identity_scores_100(self, rng):
        keys = [("w0", "X"), ("w1", "X"), ("w2", "C")]
        ref = self._codes(rng, keys)
        report = evaluate_corpus(ref, {k: (list(d), list(s)) for k, (d, s) in ref.items()})
        assert all(s == pytest.approx(100.0) for s in report.dir.scores)
        assert all(s == pytest.approx(100.0) for s in report.speed.scores)

    def test_identity_pearson_one_with_varied_lengths(self, rng):
        ref = {}
        for i, ln in enumerate((4, 7, 9, 12)):
            ref[(f"w{i}", "X")] = (
                list(rng.integers(0, 16, size=ln)), list(rng.integers(0, 16, size=ln))
            )
        report = evaluate_corpus(ref, dict(ref))
        assert report.eos_pearson == pytest.approx(1.0)

    def test_orphans_raise_pairing_error(self, rng):
        ref = self._codes(rng, [("w0", "X"), ("w1", "X")])
        gen = self._codes(rng, [("w0", "X"), ("w9", "X")])
        with pytest.raises(PairingError) as info:
            evaluate_corpus(ref, gen)
        assert ("w1", "X") in info.value.orphans
        assert ("w9", "X") in info.value.orphans

    def test_empty_raises(self):
        with pytest.raises(PairingError):
            evaluate_corpus({}, {})

    def test_report_json_schema(self, rng):
        keys = [(f"w{i}", "X") for i in range(4)]
        ref = {k: (list(rng.integers(0, 16, size=5 + i)), list(rng.integers(0, 16, size=5 + i)))
               for i, k in enumerate(keys)}
        report = evaluate_corpus(ref, dict(ref))
        obj = json.loads(report.to_json())
        assert set(obj) == {"bleu", "eos_pearson", "n_pairs"}
        assert set(obj["bleu"]) == {"dir", "speed"}
        assert set(obj["bleu"]["dir"]) == {"b1", "b2", "b3"}
        assert obj["n_pairs"] == 4
        assert obj["bleu"]["dir"]["b1"] == 100.0

    def test_format_table_layout(self, rng):
        keys = [("w0", "X")]
        ref = self._codes(rng, keys)
        report = evaluate_corpus(ref, dict(ref))
        table = evalmetrics.format_table({"model": report})
        lines = table.splitlines()
        assert "B-1" in lines[1] and "B-3" in lines[1]
        assert "100.0" in lines[2]
