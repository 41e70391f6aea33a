import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homonmt import pinyin
from homonmt.pinyin import Foreign, HanChar, Syllable


def write(tmp_path, text):
    path = tmp_path / "table.tsv"
    path.write_text(text, encoding="utf-8")
    return path


def test_load_homophone_pair(tmp_path):
    t = pinyin.load_table(write(tmp_path, "# comment\n一\tyi\n议\tyi\n"))
    assert t.char_to_syllable["一"] == t.char_to_syllable["议"] == "yi"
    assert set(t.syllable_to_chars["yi"]) == {"一", "议"}


def test_empty_file_is_empty_table(tmp_path):
    t = pinyin.load_table(write(tmp_path, ""))
    assert len(t) == 0 and t.syllables == []


@pytest.mark.parametrize("line", ["一\tYI1", "一\tyi\textra", "一二\tyi", "一", "a\tyi", "一\t"])
def test_malformed_lines_report_line_number(tmp_path, line):
    with pytest.raises(pinyin.TableError, match="line 2"):
        pinyin.load_table(write(tmp_path, f"# header\n{line}\n"))


def test_duplicate_key(tmp_path):
    with pytest.raises(pinyin.DuplicateEntryError):
        pinyin.load_table(write(tmp_path, "一\tyi\n一\tyi\n"))


def test_save_load_roundtrip(tmp_path, small_table):
    path = tmp_path / "out.tsv"
    pinyin.save_table(small_table, path)
    again = pinyin.load_table(path)
    assert dict(again.char_to_syllable) == dict(small_table.char_to_syllable)
    assert again.chars == small_table.chars


def test_shipped_table_invariants(table):
    assert len(table) >= 2000
    assert len(table.syllables) <= 500
    for c, s in table.char_to_syllable.items():
        assert re.fullmatch(r"[a-z]{1,6}", s)
        assert c in table.syllable_to_chars[s]
    for s, cs in table.syllable_to_chars.items():
        assert all(table.char_to_syllable[c] == s for c in cs)
    assert table.char_to_syllable["女"] == "nv"


def test_tokenize_examples():
    assert pinyin.tokenize("建一所小学") == [HanChar(c) for c in "建一所小学"]
    assert pinyin.tokenize("") == []
    assert pinyin.tokenize("A区12") == [Foreign("A"), HanChar("区"), Foreign("12")]


def test_tokenize_rejects_bad_utf8():
    with pytest.raises(UnicodeDecodeError):
        pinyin.tokenize(b"\xff\xfe\x00")


@given(st.text())
def test_tokenize_roundtrip_and_no_syllables(text):
    toks = pinyin.tokenize(text)
    assert pinyin.render_plain(toks) == text
    assert not any(isinstance(t, Syllable) for t in toks)
    for a, b in zip(toks, toks[1:]):
        assert not (isinstance(a, Foreign) and isinstance(b, Foreign))


def test_transcribe_examples(table):
    toks = pinyin.tokenize("请拼写他")
    assert [t.text for t in pinyin.transcribe(table, toks)] == ["qing", "pin", "xie", "ta"]
    assert pinyin.transcribe(table, [HanChar("一")]) == [Syllable("yi")]
    assert pinyin.transcribe(table, [Foreign("A")]) == [Foreign("A")]


def test_transcribe_unmapped_names_char_and_position(small_table):
    with pytest.raises(pinyin.UnmappedCharacterError) as exc:
        pinyin.transcribe(small_table, pinyin.tokenize("建国"))
    assert exc.value.char == "国" and exc.value.position == 1


def test_homophones(small_table):
    assert pinyin.homophones(small_table, "议") == ("一", "医")
    assert "一" not in pinyin.homophones(small_table, "一")
    assert pinyin.homophones(small_table, "建") == ()
    with pytest.raises(pinyin.UnmappedCharacterError):
        pinyin.homophones(small_table, "国")


@settings(max_examples=200)
@given(st.data())
def test_homophone_symmetry(table, data):
    chars = table.chars
    a = data.draw(st.sampled_from(chars))
    b = data.draw(st.sampled_from(chars))
    assert (b in pinyin.homophones(table, a)) == (a in pinyin.homophones(table, b))
    if b in pinyin.homophones(table, a):
        assert pinyin.transcribe(table, [HanChar(a)]) == pinyin.transcribe(table, [HanChar(b)])


@given(st.text(alphabet=st.characters(min_codepoint=0x4E00, max_codepoint=0x4E80)))
def test_transcribe_preserves_length(text):
    table = pinyin.SyllableTable.from_pairs((chr(c), "a") for c in range(0x4E00, 0x4E81))
    toks = pinyin.tokenize(text)
    assert len(pinyin.transcribe(table, toks)) == len(toks)


def test_render_mixed_examples():
    toks = [HanChar("建"), Syllable("yi"), HanChar("所"), HanChar("小"), HanChar("学")]
    assert pinyin.render_mixed(toks) == "建 yi 所小学"
    toks = [HanChar("听"), Syllable("yi")] + [HanChar(c) for c in "生的建议"]
    assert pinyin.render_mixed(toks) == "听 yi 生的建议"
    assert pinyin.render_mixed([HanChar(c) for c in "建一所"]) == "建一所"
    assert pinyin.render_mixed([Syllable("jian"), Syllable("yi")] + [HanChar(c) for c in "所小学"]) == "jian yi 所小学"


def test_parse_mixed_examples(table):
    assert pinyin.parse_mixed("建 yi 所小学", table) == [HanChar("建"), Syllable("yi"), HanChar("所"), HanChar("小"), HanChar("学")]
    # words outside the syllable inventory stay foreign
    assert pinyin.parse_mixed("建 xyz 所", table) == [HanChar("建"), Foreign(" xyz "), HanChar("所")]


_foreign_words = st.text(alphabet="ABCXYZ0123456789.,!?-", min_size=1, max_size=4)


@st.composite
def mixed_sequences(draw, table):
    syls = table.syllables
    out = []
    for _ in range(draw(st.integers(0, 10))):
        kind = draw(st.sampled_from(["han", "syl", "for"]))
        if kind == "han":
            out.append(HanChar(draw(st.sampled_from(table.chars[:200]))))
        elif kind == "syl":
            out.append(Syllable(draw(st.sampled_from(syls))))
        elif not out or not isinstance(out[-1], Foreign):
            words = draw(st.lists(_foreign_words, min_size=1, max_size=3))
            out.append(Foreign(" ".join(words)))
    return out


@settings(max_examples=300)
@given(st.data())
def test_parse_inverts_render(table, data):
    toks = data.draw(mixed_sequences(table))
    assert pinyin.parse_mixed(pinyin.render_mixed(toks), table) == toks
