import pytest

from vwsd.captions import (
    BEAM_COUNT,
    CaptionSet,
    CaptionStore,
    caption_text,
    load_captions,
    write_captions,
)
from vwsd.errors import CaptionError


def greedy(image_id="img1", text="a cat on a mat", captioner="cap"):
    return CaptionSet(image_id=image_id, captioner=captioner,
                      strategy="greedy", captions=(text,))


def beam(image_id="img1", captioner="cap"):
    return CaptionSet(image_id=image_id, captioner=captioner, strategy="beam",
                      captions=tuple(f"caption {i}" for i in range(BEAM_COUNT)))


def test_count_validation():
    with pytest.raises(CaptionError):
        CaptionSet(image_id="i", captioner="c", strategy="greedy",
                   captions=("a", "b"))
    with pytest.raises(CaptionError):
        CaptionSet(image_id="i", captioner="c", strategy="beam",
                   captions=tuple(f"c{i}" for i in range(9)))
    with pytest.raises(CaptionError):
        CaptionSet(image_id="i", captioner="c", strategy="sampled", captions=("a",))
    with pytest.raises(CaptionError):
        CaptionSet(image_id="i", captioner="c", strategy="greedy", captions=("",))


def test_caption_text_single_and_joined():
    assert caption_text(greedy()) == "a cat on a mat"
    joined = caption_text(beam())
    assert joined.startswith("caption 0, caption 1, ")
    assert joined.count(", ") == 9
    # captions containing commas are joined as-is, no escaping
    s = CaptionSet(image_id="i", captioner="c", strategy="beam",
                   captions=tuple(f"left {i}, right {i}" for i in range(10)))
    assert caption_text(s) == ", ".join(f"left {i}, right {i}" for i in range(10))


def test_store_duplicate_semantics():
    store = CaptionStore()
    store.add(greedy())
    store.add(greedy())  # identical payload: no-op
    assert len(store) == 1
    with pytest.raises(CaptionError):
        store.add(greedy(text="a different caption"))
    # same image under another strategy or captioner is a separate slot
    store.add(beam())
    store.add(greedy(captioner="other"))
    assert len(store) == 3


def test_store_lookup_error():
    store = CaptionStore()
    store.add(greedy())
    assert store.get("img1", "cap", "greedy").captions == ("a cat on a mat",)
    with pytest.raises(CaptionError) as err:
        store.get("img1", "cap", "beam")
    assert "beam" in str(err.value)


def test_jsonl_roundtrip(tmp_path):
    path = tmp_path / "captions.jsonl"
    sets = [greedy(), beam(), greedy("img2", "second image")]
    write_captions(sets, path)
    store = load_captions(path)
    assert len(store) == 3
    assert store.get("img2", "cap", "greedy").captions == ("second image",)


def test_jsonl_strict_fields(tmp_path):
    path = tmp_path / "captions.jsonl"
    good = '{"image_id": "i", "captioner": "c", "strategy": "greedy", "captions": ["x"]}'
    path.write_text(good[:-1] + ', "extra": 1}' + "\n")
    with pytest.raises(CaptionError) as err:
        load_captions(path)
    assert ":1" in str(err.value)
    path.write_text(good.replace('"strategy": "greedy", ', "") + "\n")
    with pytest.raises(CaptionError):
        load_captions(path)
    path.write_text('{"image_id": "i", "captioner": "c", "strategy": "greedy", "captions": "x"}\n')
    with pytest.raises(CaptionError):
        load_captions(path)


def test_jsonl_wrong_count_carries_location(tmp_path):
    path = tmp_path / "captions.jsonl"
    path.write_text(
        '{"image_id": "i", "captioner": "c", "strategy": "beam", "captions": ["only one"]}\n')
    with pytest.raises(CaptionError) as err:
        load_captions(path)
    assert ":1" in str(err.value) and "10" in str(err.value)


def test_missing_file(tmp_path):
    with pytest.raises(CaptionError) as err:
        load_captions(tmp_path / "nope.jsonl")
    assert "no such file" in str(err.value)
