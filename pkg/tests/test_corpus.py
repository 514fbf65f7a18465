"""Corpus loading, masking, instance explosion, filtering, splitting, and
coding-quality statistics."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsfuse.base import DataError
from cpsfuse.corpus import (
    DEFAULT_LABEL_SCHEME,
    Corpus,
    CorpusRecord,
    Dimension,
    LabelScheme,
    MaskLexicon,
    SplitSpec,
    Utterance,
    apply_masks,
    cohens_kappa,
    explode_multicoded,
    filter_rare_classes,
    load_corpus,
    load_rater_codings,
    partition_by_dimension,
    save_corpus,
    stratified_split,
    word_edit_distance,
    word_error_rate,
)

# Table 1 per-class (total, train, test) counts
TABLE1 = {
    "SS1": (215, 172, 43),
    "SS2": (1223, 978, 245),
    "SS3": (349, 279, 70),
    "SS4": (27, 21, 6),
    "SS5": (94, 75, 19),
    "SS6": (126, 101, 25),
    "SS7": (22, 18, 4),
    "SS8": (51, 41, 10),
    "SC1": (1590, 1272, 318),
    "SC2": (859, 687, 172),
    "AS1": (569, 455, 114),
    "AS2": (920, 736, 184),
    "AS3": (39, 31, 8),
}


def make_utterance(uid, text="solve the triangle", **kw):
    fields = dict(id=uid, triad_id="t01", speaker_id="s1", start_ms=0, end_ms=1000, text=text)
    fields.update(kw)
    return Utterance(**fields)


def make_instances(label_counts, dimension=Dimension.SOCIAL_COGNITIVE):
    insts = []
    k = 0
    for label, count in label_counts.items():
        for _ in range(count):
            utt = make_utterance(f"u{k:05d}")
            insts.append(
                explode_multicoded(Corpus([CorpusRecord(utt, ((dimension, label),))]))[0]
            )
            k += 1
    return insts


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def record_dict(uid, text="we solve it", codes=None):
    return {
        "id": uid,
        "triad_id": "t01",
        "speaker_id": "s1",
        "start_ms": 0,
        "end_ms": 1200,
        "text": text,
        "codes": codes or [],
    }


class TestLoadCorpus:
    def test_empty_file_empty_corpus(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("")
        corpus = load_corpus(path)
        assert len(corpus) == 0
        assert explode_multicoded(corpus) == []

    def test_two_records(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record_dict("u1"), record_dict("u2")])
        assert len(load_corpus(path)) == 2

    def test_duplicate_id_names_offender(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record_dict("u1"), record_dict("u1")])
        with pytest.raises(DataError, match="'u1'"):
            load_corpus(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(record_dict("u1")) + "\n{broken\n")
        with pytest.raises(DataError, match="line 2"):
            load_corpus(path)

    def test_missing_field(self, tmp_path):
        rec = record_dict("u1")
        del rec["speaker_id"]
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [rec])
        with pytest.raises(DataError, match="speaker_id"):
            load_corpus(path)

    def test_unknown_class_code_with_scheme(self, tmp_path):
        rec = record_dict("u1", codes=[{"dimension": "social-cognitive", "class": "XX9"}])
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [rec])
        with pytest.raises(DataError, match="XX9"):
            load_corpus(path, scheme=DEFAULT_LABEL_SCHEME)
        # without a scheme the class set is data-driven
        assert len(load_corpus(path)) == 1

    def test_end_before_start_rejected(self, tmp_path):
        rec = record_dict("u1")
        rec["end_ms"] = -5
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [rec])
        with pytest.raises(DataError, match="end_ms"):
            load_corpus(path)

    def test_blank_text_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record_dict("u1", text="   ")])
        with pytest.raises(DataError, match="empty"):
            load_corpus(path)

    def test_save_load_round_trip(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(
            path,
            [record_dict("u1", codes=[{"dimension": "affective", "class": "AS1"}])],
        )
        corpus = load_corpus(path)
        out = tmp_path / "copy.jsonl"
        save_corpus(corpus, out)
        again = load_corpus(out)
        assert again.records == corpus.records


class TestApplyMasks:
    def test_direct_substitution(self):
        lex = MaskLexicon({"name": ("John",)})
        corpus = Corpus([CorpusRecord(make_utterance("u1", text="ask John"))])
        masked = apply_masks(corpus, lex)
        assert masked["u1"].utterance.text == "ask [NAME]"

    def test_empty_lexicon_is_identity(self):
        corpus = Corpus([CorpusRecord(make_utterance("u1", text="ask John"))])
        assert apply_masks(corpus, MaskLexicon()) is corpus

    def test_longest_match_wins(self):
        lex = MaskLexicon({"location": ("New York City", "York")})
        corpus = Corpus([CorpusRecord(make_utterance("u1", text="New York City"))])
        assert apply_masks(corpus, lex)["u1"].utterance.text == "[LOCATION]"

    def test_case_insensitive_word_boundary(self):
        lex = MaskLexicon({"name": ("ann",)})
        corpus = Corpus(
            [CorpusRecord(make_utterance("u1", text="Ann is planning the answer"))]
        )
        # "planning" and "answer" contain "ann" but are not word matches
        assert apply_masks(corpus, lex)["u1"].utterance.text == "[NAME] is planning the answer"

    def test_override_replaces_whole_text(self):
        lex = MaskLexicon({"name": ("John",)})
        corpus = Corpus([CorpusRecord(make_utterance("u1", text="ask John"))])
        masked = apply_masks(corpus, lex, overrides={"u1": "ask [NAME] politely"})
        assert masked["u1"].utterance.text == "ask [NAME] politely"

    def test_idempotent_even_when_surface_matches_category(self):
        lex = MaskLexicon({"name": ("name",)})
        corpus = Corpus([CorpusRecord(make_utterance("u1", text="say the name now"))])
        once = apply_masks(corpus, lex)
        twice = apply_masks(once, lex)
        assert once["u1"].utterance.text == twice["u1"].utterance.text == "say the [NAME] now"

    @settings(max_examples=60, deadline=None)
    @given(
        words=st.lists(
            st.sampled_from(["alpha", "beta", "gamma", "delta", "Paris", "Rome"]),
            min_size=1,
            max_size=8,
        ),
        surfaces=st.sets(st.sampled_from(["alpha", "beta", "Paris", "Rome"]), max_size=3),
    )
    def test_idempotence_property(self, words, surfaces):
        lex = MaskLexicon({"entity": tuple(surfaces)})
        corpus = Corpus([CorpusRecord(make_utterance("u1", text=" ".join(words)))])
        once = apply_masks(corpus, lex)
        twice = apply_masks(once, lex)
        assert once["u1"].utterance.text == twice["u1"].utterance.text

    def test_empty_surface_rejected(self):
        with pytest.raises(DataError, match="empty surface"):
            MaskLexicon({"name": ("",)})

    def test_default_categories_count(self):
        assert len(MaskLexicon().entries) == 11


class TestExplodeMulticoded:
    def test_two_codes_two_instances_share_text(self):
        utt = make_utterance("u1", text="we agree")
        corpus = Corpus(
            [
                CorpusRecord(
                    utt,
                    (
                        (Dimension.SOCIAL_COGNITIVE, "SS2"),
                        (Dimension.SOCIAL_COGNITIVE, "SC1"),
                    ),
                )
            ]
        )
        instances = explode_multicoded(corpus)
        assert len(instances) == 2
        assert {i.class_label for i in instances} == {"SS2", "SC1"}
        assert all(i.utterance.text == "we agree" for i in instances)
        assert len({i.instance_id for i in instances}) == 2

    def test_single_code(self):
        corpus = Corpus(
            [CorpusRecord(make_utterance("u1"), ((Dimension.AFFECTIVE, "AS1"),))]
        )
        assert len(explode_multicoded(corpus)) == 1

    def test_zero_codes_drop_out(self):
        corpus = Corpus([CorpusRecord(make_utterance("u1"))])
        assert explode_multicoded(corpus) == []

    def test_unknown_code_with_scheme(self):
        corpus = Corpus(
            [CorpusRecord(make_utterance("u1"), ((Dimension.AFFECTIVE, "ZZ1"),))]
        )
        with pytest.raises(DataError, match="ZZ1"):
            explode_multicoded(corpus, scheme=DEFAULT_LABEL_SCHEME)

    @settings(max_examples=50, deadline=None)
    @given(counts=st.lists(st.integers(min_value=0, max_value=4), min_size=1, max_size=10))
    def test_conserves_codes(self, counts):
        records = []
        for k, n in enumerate(counts):
            codes = tuple((Dimension.AFFECTIVE, f"AS{j % 3 + 1}") for j in range(n))
            records.append(CorpusRecord(make_utterance(f"u{k}"), codes))
        corpus = Corpus(records)
        assert len(explode_multicoded(corpus)) == sum(counts)


class TestFilterRareClasses:
    def test_class_below_threshold_removed(self):
        insts = make_instances({"SS2": 12, "SS4": 9})
        out = filter_rare_classes(insts, 10)
        assert {i.class_label for i in out} == {"SS2"}

    def test_all_kept_identity_order_preserved(self):
        insts = make_instances({"SS2": 10, "SS3": 11})
        assert filter_rare_classes(insts, 10) == insts

    def test_exactly_ten_kept(self):
        insts = make_instances({"SS8": 10})
        assert len(filter_rare_classes(insts, 10)) == 10

    def test_all_removed_is_error(self):
        insts = make_instances({"SS4": 3})
        with pytest.raises(DataError, match="empty"):
            filter_rare_classes(insts, 10)

    def test_mixed_dimensions_rejected(self):
        insts = make_instances({"SS2": 2}) + make_instances(
            {"AS1": 2}, Dimension.AFFECTIVE
        )
        with pytest.raises(DataError, match="dimension"):
            filter_rare_classes(insts, 1)


class TestStratifiedSplit:
    def test_ss2_paper_counts(self):
        insts = make_instances({"SS2": 1223})
        split = stratified_split(insts, SplitSpec(seed=0))
        assert abs(len(split.test) - 245) <= 1
        assert abs(len(split.train) - 978) <= 1

    def test_rounding_rule_ten_at_fifth(self):
        insts = make_instances({"SS1": 10})
        split = stratified_split(insts, SplitSpec(seed=1))
        assert (len(split.train), len(split.test)) == (8, 2)

    def test_half_fraction_symmetry(self):
        insts = make_instances({"SS1": 4})
        split = stratified_split(insts, SplitSpec(test_fraction=0.5, seed=1))
        assert (len(split.train), len(split.test)) == (2, 2)

    def test_partition_is_exact(self):
        insts = make_instances({"SS1": 30, "SS2": 14})
        split = stratified_split(insts, SplitSpec(seed=3))
        all_ids = {i.instance_id for i in insts}
        assert set(split.train) | set(split.test) == all_ids
        assert set(split.train) & set(split.test) == set()

    def test_deterministic_under_seed(self):
        insts = make_instances({"SS1": 25, "SS2": 17})
        a = stratified_split(insts, SplitSpec(seed=9))
        b = stratified_split(insts, SplitSpec(seed=9))
        c = stratified_split(insts, SplitSpec(seed=10))
        assert a == b
        assert a != c

    def test_class_below_two_rejected(self):
        insts = make_instances({"SS1": 1, "SS2": 5})
        with pytest.raises(DataError, match="SS1"):
            stratified_split(insts, SplitSpec(seed=0))

    @settings(max_examples=40, deadline=None)
    @given(
        counts=st.lists(st.integers(min_value=2, max_value=60), min_size=1, max_size=5),
        seed=st.integers(min_value=0, max_value=999),
    )
    def test_per_class_proportion_property(self, counts, seed):
        labels = {f"SS{k + 1}": n for k, n in enumerate(counts)}
        insts = make_instances(labels)
        split = stratified_split(insts, SplitSpec(seed=seed))
        test_set = set(split.test)
        by_id = {i.instance_id: i for i in insts}
        for label, n in labels.items():
            n_test = sum(
                1 for iid in test_set if by_id[iid].class_label == label
            )
            assert abs(n_test / n - 0.2) <= 1.0 / n + 1e-12

    def test_fraction_bounds_validated(self):
        with pytest.raises(DataError):
            SplitSpec(test_fraction=0.0)
        with pytest.raises(DataError):
            SplitSpec(test_fraction=1.0)


class TestPartitionByDimension:
    def test_counts(self):
        insts = make_instances({"SS2": 3}) + make_instances({"AS1": 2}, Dimension.AFFECTIVE)
        social, affective = partition_by_dimension(insts)
        assert (len(social), len(affective)) == (3, 2)

    def test_all_affective(self):
        insts = make_instances({"AS2": 4}, Dimension.AFFECTIVE)
        social, affective = partition_by_dimension(insts)
        assert social == [] and len(affective) == 4

    def test_table1_totals(self):
        insts = []
        for label, (total, _tr, _te) in TABLE1.items():
            dim = Dimension.AFFECTIVE if label.startswith("AS") else Dimension.SOCIAL_COGNITIVE
            insts += make_instances({label: total}, dim)
        social, affective = partition_by_dimension(insts)
        assert len(social) == 4556
        assert len(affective) == 1528


def oracle_min_edit(ref, hyp):
    """Exhaustive recursion over all edit scripts; exponential but exact."""
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    return min(
        oracle_min_edit(ref[1:], hyp) + 1,
        oracle_min_edit(ref, hyp[1:]) + 1,
        oracle_min_edit(ref[1:], hyp[1:]) + (ref[0] != hyp[0]),
    )


class TestWordErrorRate:
    def test_identical_strings(self):
        assert word_error_rate("we solve it", "we solve it") == 0.0

    def test_one_deletion_of_four(self):
        assert word_error_rate("we solve the triangle", "we solve triangle") == 0.25

    def test_substitution_plus_insertion(self):
        assert word_error_rate("a", "b c") == 2.0

    def test_case_insensitive_tokenization(self):
        assert word_error_rate("We Solve", "we solve") == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(DataError, match="empty reference"):
            word_error_rate("   ", "anything")

    @settings(max_examples=150, deadline=None)
    @given(
        ref=st.lists(st.sampled_from("abc"), min_size=1, max_size=6),
        hyp=st.lists(st.sampled_from("abc"), min_size=0, max_size=6),
    )
    def test_dp_matches_exhaustive_search(self, ref, hyp):
        assert word_edit_distance(ref, hyp) == oracle_min_edit(tuple(ref), tuple(hyp))


def hand_kappa(pairs):
    n = len(pairs)
    p_o = sum(a == b for a, b in pairs) / n
    labels = {x for p in pairs for x in p}
    p_e = sum(
        (sum(a == lbl for a, _ in pairs) / n) * (sum(b == lbl for _, b in pairs) / n)
        for lbl in labels
    )
    return 1.0 if p_e >= 1 else (p_o - p_e) / (1 - p_e)


class TestCohensKappa:
    def test_perfect_agreement_is_exactly_one(self):
        assert cohens_kappa([("A", "A"), ("A", "A"), ("B", "B"), ("B", "B")]) == 1.0

    def test_hand_zero_case(self):
        value = cohens_kappa([("A", "A"), ("A", "B"), ("B", "A"), ("B", "B")])
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_constant_rater_zero_case(self):
        value = cohens_kappa([("A", "A"), ("A", "A"), ("A", "A"), ("B", "A")])
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_identical_constants(self):
        assert cohens_kappa([("A", "A"), ("A", "A")]) == 1.0

    def test_triples_accepted(self):
        assert cohens_kappa([("u1", "A", "A"), ("u2", "B", "B")]) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            cohens_kappa([])

    @settings(max_examples=80, deadline=None)
    @given(
        pairs=st.lists(
            st.tuples(st.sampled_from("ABCD"), st.sampled_from("ABCD")),
            min_size=1,
            max_size=40,
        )
    )
    def test_matches_hand_formula_and_relabel_invariance(self, pairs):
        value = cohens_kappa(pairs)
        assert value == pytest.approx(hand_kappa(pairs), abs=1e-12)
        assert -1.0 - 1e-12 <= value <= 1.0 + 1e-12
        relabel = {"A": "W", "B": "X", "C": "Y", "D": "Z"}
        renamed = [(relabel[a], relabel[b]) for a, b in pairs]
        assert cohens_kappa(renamed) == pytest.approx(value, abs=1e-12)


class TestRaterFile:
    def test_load_rows(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("id,rater_a,rater_b\nu1,SS2,SS2\nu2,SS1,SS2\n")
        rows = load_rater_codings(path)
        assert rows == [("u1", "SS2", "SS2"), ("u2", "SS1", "SS2")]
        assert cohens_kappa(rows) == pytest.approx(hand_kappa([("SS2", "SS2"), ("SS1", "SS2")]))


class TestLabelScheme:
    def test_default_scheme_orders(self):
        assert DEFAULT_LABEL_SCHEME.codes_for(Dimension.SOCIAL_COGNITIVE)[:3] == (
            "SS1", "SS2", "SS3",
        )
        assert DEFAULT_LABEL_SCHEME.codes_for(Dimension.AFFECTIVE) == ("AS1", "AS2", "AS3")

    def test_data_driven_natural_order(self):
        insts = make_instances({"SS10": 2, "SS2": 2, "SS1": 2})
        scheme = LabelScheme.from_instances(insts)
        assert scheme.codes_for(Dimension.SOCIAL_COGNITIVE) == ("SS1", "SS2", "SS10")

    def test_duplicate_codes_rejected(self):
        with pytest.raises(DataError):
            LabelScheme({Dimension.AFFECTIVE: ("AS1", "AS1")})
