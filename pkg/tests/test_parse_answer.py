import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vwsd.qa import LETTERS, MATCHERS, parse_answer

# caption fixture reused across cases (a real greedy option list)
OPTIONS = (
    "a small boat sitting on top of a dock.",
    "a group of people walking on a green hill.",
    "a student gets a hug from a student.",
    "a large fly laying on a rock in the water.",
    "the bus stop at the station",
    "a train is parked at a station.",
    "a crowd of people watching a concert.",
    "a train station with a sign on the side of it.",
    "a black and red train on a track.",
    "a man laying in the sand on top of a surfboard.",
)


def parsed(raw, options=OPTIONS):
    return parse_answer(raw, options)


def test_pinned_transcripts():
    a = parsed("The most appropriate caption for the tender embrace would be: "
               "(C) a student gets a hug from a student.")
    assert (a.letter, a.matched_by) == ("C", "paren_letter")
    b = parsed("not applicable without more information about the photo")
    assert b.letter is None and b.matched_by == "none"
    c = parsed("the answer is (H) a close up of a metal plate with a pattern of lines.")
    assert c.letter == "H"


def test_paren_letter_unique_wins():
    assert parsed("(B)").letter == "B"
    assert parsed("I would pick (J) here").matched_by == "paren_letter"


def test_paren_ambiguity_falls_through():
    # two distinct parenthesized letters are indecisive; the phrase matcher
    # then settles it
    a = parsed("(A) or (B)? The answer is (B).")
    assert (a.letter, a.matched_by) == ("B", "answer_is_phrase")
    # repeated same letter is still unique
    assert parsed("(D) yes, (D) definitely").letter == "D"


def test_answer_is_variants():
    assert parsed("The answer is E").matched_by == "answer_is_phrase"
    assert parsed("answer is: F").letter == "F"
    assert parsed("The Answer is G.").letter == "G"
    # letter glued to a word is not an answer letter
    assert parsed("The answer is Certainly not here").letter is None


def test_choose_phrase():
    a = parsed("Between (A) and (D), I choose: (D)")
    assert (a.letter, a.matched_by) == ("D", "answer_is_phrase")


def test_leading_letter_delimiters():
    for raw in ("C", "C.", "C)", "C:", "C, because"):
        a = parsed(raw)
        assert (a.letter, a.matched_by) == ("C", "leading_letter"), raw
    # whitespace is not a delimiter; lowercase never matches
    assert parsed("C is my answer").matched_by != "leading_letter"
    assert parsed("c.").letter is None


def test_leading_letter_respects_option_count():
    assert parsed("J.", OPTIONS).letter == "J"
    assert parsed("J.", OPTIONS[:3]).letter is None


def test_fuzzy_exact_caption():
    a = parsed("a crowd of people watching a concert.")
    assert (a.letter, a.matched_by) == ("G", "caption_fuzzy")


def test_fuzzy_tail_window():
    a = parsed("I would say: a student gets a hug from a student.")
    assert (a.letter, a.matched_by) == ("C", "caption_fuzzy")


def test_fuzzy_case_and_whitespace_insensitive():
    a = parsed("A STUDENT GETS A  HUG FROM A STUDENT.")
    assert a.letter == "C"


def test_fuzzy_near_miss_within_threshold():
    a = parsed("a student gets a hug from a teacher.")
    assert a.letter == "C"


def test_fuzzy_ambiguous_options_abstain():
    options = ("same caption text", "same caption text", "something else")
    assert parsed("same caption text", options).letter is None


def test_fuzzy_below_threshold_abstains():
    a = parsed("the weather is nice today")
    assert a.letter is None and a.matched_by == "none"


def test_abstain_cases():
    for raw in ("", "   ", "I cannot determine the answer.",
                "(K) is not a valid option", "K."):
        a = parsed(raw)
        assert a.letter is None and a.matched_by == "none", raw
        assert a.outcome == "abstain"


def test_outcome_property():
    assert parsed("(A)").outcome == "option"
    assert parsed("???").outcome == "abstain"


def test_roundtrip_all_letters():
    for letter in LETTERS:
        assert parsed(f"({letter})").letter == letter


@given(raw=st.text(max_size=300))
@settings(max_examples=300, deadline=None)
def test_parser_is_total(raw):
    a = parse_answer(raw, OPTIONS)
    assert a.matched_by in MATCHERS
    assert a.letter is None or a.letter in LETTERS
    assert (a.letter is None) == (a.matched_by == "none")
    assert a.raw == raw
