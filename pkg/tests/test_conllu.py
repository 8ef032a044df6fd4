"""CoNLL-U ingestion."""

import pytest

from synret.conllu import parse_conllu
from synret.errors import DataError

SIMPLE = """\
# text = a man is singing
1\ta\ta\tDET\t_\t_\t2\tdet\t_\t_
2\tman\tman\tNOUN\t_\t_\t4\tnsubj\t_\t_
3\tis\tbe\tAUX\t_\t_\t4\taux\t_\t_
4\tsinging\tsing\tVERB\t_\t_\t0\troot\t_\t_
"""


def test_simple_sentence():
    toks = parse_conllu(SIMPLE)
    assert [t.form for t in toks] == ["a", "man", "is", "singing"]
    assert [t.upos for t in toks] == ["DET", "NOUN", "AUX", "VERB"]
    assert [t.head for t in toks] == [2, 4, 4, 0]
    assert toks[1].deprel == "nsubj"


def test_accepts_bytes():
    toks = parse_conllu(SIMPLE.encode("utf-8"))
    assert len(toks) == 4


def test_empty_input():
    with pytest.raises(DataError, match="no sentence"):
        parse_conllu("")
    with pytest.raises(DataError, match="no sentence"):
        parse_conllu("# only a comment\n\n")


def test_malformed_line():
    with pytest.raises(DataError, match="10 tab-separated"):
        parse_conllu("1\tman\tNOUN\n")


def test_non_integer_head():
    bad = SIMPLE.replace("4\tnsubj", "x\tnsubj")
    with pytest.raises(DataError, match="non-integer head"):
        parse_conllu(bad)


def test_skips_multiword_and_empty_nodes():
    text = (
        "1-2\tcannot\t_\t_\t_\t_\t_\t_\t_\t_\n"
        "1\tcan\tcan\tAUX\t_\t_\t0\troot\t_\t_\n"
        "2\tnot\tnot\tPART\t_\t_\t1\tadvmod\t_\t_\n"
        "2.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_\n"
    )
    toks = parse_conllu(text)
    assert [t.form for t in toks] == ["can", "not"]


def test_second_sentence_warns_and_is_ignored():
    two = SIMPLE + "\n" + SIMPLE
    with pytest.warns(UserWarning, match="multiple sentences"):
        toks = parse_conllu(two)
    assert len(toks) == 4


def test_non_contiguous_ids_rejected():
    bad = (
        "1\ta\ta\tDET\t_\t_\t2\tdet\t_\t_\n"
        "3\tman\tman\tNOUN\t_\t_\t0\troot\t_\t_\n"
    )
    with pytest.raises(DataError, match="contiguous"):
        parse_conllu(bad)


def test_self_head_rejected():
    bad = "1\tloop\tloop\tNOUN\t_\t_\t1\tdep\t_\t_\n"
    with pytest.raises(DataError, match="own head"):
        parse_conllu(bad)


def test_head_out_of_range_rejected():
    bad = "1\tman\tman\tNOUN\t_\t_\t9\tdep\t_\t_\n"
    with pytest.raises(DataError, match="out of range"):
        parse_conllu(bad)
