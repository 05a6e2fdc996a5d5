"""Score/inventory parsing, validation, and serialization round trips."""

import pytest

from ffsinger.score import (
    Note,
    PhonemeInventory,
    REST_PITCH,
    Score,
    ScoreParseError,
    ValidationError,
    parse_inventory,
    parse_score,
    serialize_score,
    validate_against_inventory,
)

INVENTORY_TEXT = """\
sil silence
a vowel
i vowel
u vowel
k consonant
s consonant
t consonant
"""


@pytest.fixture
def inv_dir(tmp_path):
    (tmp_path / "inv.txt").write_text(INVENTORY_TEXT)
    return tmp_path


def make_score(body: str) -> str:
    return "version 1\ninventory inv.txt\n" + body


class TestInventory:
    def test_parse_and_lookup(self):
        inv = parse_inventory(INVENTORY_TEXT)
        assert len(inv) == 7
        assert inv.id_of("sil") == 0
        assert inv.is_vowel("a") and inv.is_consonant("k") and inv.is_silence("sil")
        assert inv.silence_symbol == "sil"
        assert "zz" not in inv

    def test_ids_are_dense_and_stable(self):
        inv = parse_inventory(INVENTORY_TEXT)
        assert [inv.id_of(s) for s in inv.symbols] == list(range(len(inv)))

    def test_exactly_one_silence(self):
        with pytest.raises(ValidationError):
            parse_inventory("a vowel\nk consonant\n")
        with pytest.raises(ValidationError):
            parse_inventory("sil silence\npau silence\na vowel\n")

    def test_rejects_duplicates_and_bad_classes(self):
        with pytest.raises(ValidationError):
            parse_inventory("sil silence\na vowel\na vowel\n")
        with pytest.raises(ScoreParseError):
            parse_inventory("sil silence\na glide\n")

    def test_round_trip(self):
        inv = parse_inventory(INVENTORY_TEXT)
        assert parse_inventory(inv.to_text()) == inv


class TestParseScore:
    def test_minimal_one_note_file(self, inv_dir):
        score, inv = parse_score(make_score("note 0 50 60 s+i\n"), base_dir=inv_dir)
        assert len(score.notes) == 1
        assert score.notes[0] == Note(0, 50, 60, ("s", "i"))
        assert score.total_frames == 50
        assert score.hop_ms == 10
        assert inv.silence_symbol == "sil"

    def test_three_phoneme_syllable(self, inv_dir):
        score, _ = parse_score(make_score("note 5 40 62 k+a+t\n"), base_dir=inv_dir)
        assert score.notes[0].phonemes == ("k", "a", "t")

    def test_rest_note(self, inv_dir):
        score, _ = parse_score(make_score("note 0 10 R sil\nnote 10 20 60 a\n"), base_dir=inv_dir)
        assert score.notes[0].is_rest
        assert score.notes[0].pitch == REST_PITCH

    def test_comments_and_blank_lines(self, inv_dir):
        text = "# header comment\nversion 1\n\ninventory inv.txt  # trailing\nnote 0 10 60 a\n"
        score, _ = parse_score(text, base_dir=inv_dir)
        assert len(score.notes) == 1

    def test_overlapping_notes_rejected(self, inv_dir):
        with pytest.raises(ValidationError) as exc:
            parse_score(make_score("note 0 20 60 a\nnote 10 20 62 i\n"), base_dir=inv_dir)
        assert exc.value.line == 4
        assert exc.value.note_indices == (1,)

    def test_unsorted_notes_rejected(self, inv_dir):
        with pytest.raises(ValidationError):
            parse_score(make_score("note 30 10 60 a\nnote 0 10 62 i\n"), base_dir=inv_dir)

    def test_errors_carry_line_numbers(self, inv_dir):
        cases = [
            ("nope 1\n", 1),
            ("version 1\nnote 0 10 60 a\n", 2),
            (make_score("note 0 ten 60 a\n"), 3),
            (make_score("note 0 10 60 a extra junk\n"), 3),
        ]
        for text, line in cases:
            with pytest.raises(ScoreParseError) as exc:
                parse_score(text, base_dir=inv_dir)
            assert exc.value.line == line, text

    def test_missing_inventory_file(self, inv_dir):
        with pytest.raises(ScoreParseError):
            parse_score("version 1\ninventory nowhere.txt\nnote 0 10 60 a\n", base_dir=inv_dir)


class TestValidateAgainstInventory:
    def setup_method(self):
        self.inv = parse_inventory(INVENTORY_TEXT)

    def test_known_symbols_pass(self):
        score = Score((Note(0, 10, 60, ("k", "a")),), 10)
        validate_against_inventory(score, self.inv)

    def test_unknown_symbol_names_note(self):
        score = Score((Note(0, 10, 60, ("zz", "a")),), 10)
        with pytest.raises(ValidationError) as exc:
            validate_against_inventory(score, self.inv)
        assert exc.value.note_indices == (0,)
        assert "zz" in str(exc.value)

    def test_vowel_less_note_rejected(self):
        score = Score((Note(0, 10, 60, ("s", "t")),), 10)
        with pytest.raises(ValidationError):
            validate_against_inventory(score, self.inv)

    def test_all_offenders_listed(self):
        score = Score((Note(0, 10, 60, ("s", "t")),
                       Note(10, 10, 62, ("a",)),
                       Note(20, 10, 64, ("zz",))), 30)
        with pytest.raises(ValidationError) as exc:
            validate_against_inventory(score, self.inv)
        assert exc.value.note_indices == (0, 2)

    def test_rest_must_be_single_silence(self):
        score = Score((Note(0, 10, REST_PITCH, ("a",)),), 10)
        with pytest.raises(ValidationError):
            validate_against_inventory(score, self.inv)


class TestSerialization:
    def test_parse_serialize_parse_fixed_point(self, inv_dir):
        body = ("note 0 10 R sil\n"
                "note 10 40 60 k+a+t\n"
                "note 55 25 67 s+i\n")
        score, _ = parse_score(make_score(body), base_dir=inv_dir)
        text = serialize_score(score, "inv.txt")
        score2, _ = parse_score(text, base_dir=inv_dir)
        assert score2 == score
        assert serialize_score(score2, "inv.txt") == text

    def test_trailing_gap_preserved_via_rest(self, inv_dir):
        # total_frames is derived from note extents, so a trailing pause
        # must be written as an explicit rest
        score, _ = parse_score(make_score("note 0 10 60 a\nnote 10 5 R sil\n"), base_dir=inv_dir)
        assert score.total_frames == 15
