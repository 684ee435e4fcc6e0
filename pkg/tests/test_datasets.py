import pytest
from hypothesis import given, strategies as st

from analogybench.datasets import (
    ConceptRecord,
    DatasetTag,
    ReferenceAnalogy,
    dataset_stats,
    dump_dataset,
    load_dataset,
    parse_dataset,
    save_dataset,
)
from analogybench.errors import InputError, SchemaError

VALID_LINE = (
    '{"id":"std-1","target":"atom","references":'
    '[{"id":"r1","source":"solar system","text":""}],"dataset":"std"}'
)


def test_load_single_record(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text(VALID_LINE + "\n", encoding="utf-8")
    records = load_dataset(path)
    assert len(records) == 1
    record = records[0]
    assert record.target == "atom"
    assert record.dataset_tag is DatasetTag.STD
    assert len(record.references) == 1
    assert record.references[0].source == "solar system"
    assert record.references[0].text == ""


def test_empty_file_gives_empty_list(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_dataset(path) == []


def test_missing_target_reports_line_number():
    text = VALID_LINE + "\n" + '{"id":"std-2","references":[]}' + "\n"
    with pytest.raises(SchemaError, match="line 2"):
        parse_dataset(text)


def test_empty_target_rejected():
    with pytest.raises(SchemaError, match="target"):
        parse_dataset('{"id":"x","target":"  ","references":[]}')


def test_duplicate_concept_id_rejected():
    text = VALID_LINE + "\n" + VALID_LINE + "\n"
    with pytest.raises(SchemaError, match="duplicate concept id"):
        parse_dataset(text)


def test_duplicate_reference_id_rejected():
    line = (
        '{"id":"a","target":"t","references":'
        '[{"id":"r","source":"s","text":""},{"id":"r","source":"s2","text":""}]}'
    )
    with pytest.raises(SchemaError, match="duplicate reference id"):
        parse_dataset(line)


def test_malformed_json_reports_line_number():
    with pytest.raises(SchemaError, match="line 1"):
        parse_dataset("{not json}\n")


def test_missing_source_rejected():
    line = '{"id":"a","target":"t","references":[{"id":"r","text":"x"}]}'
    with pytest.raises(SchemaError, match="source"):
        parse_dataset(line)


def test_unknown_tag_rejected():
    with pytest.raises(SchemaError, match="dataset tag"):
        parse_dataset('{"id":"a","target":"t","references":[],"dataset":"web"}')


def test_expected_tag_mismatch_rejects_file():
    with pytest.raises(SchemaError, match="expected"):
        parse_dataset(VALID_LINE, expected_tag=DatasetTag.SAQA)
    assert len(parse_dataset(VALID_LINE, expected_tag="std")) == 1


def test_unreadable_file_is_io_error(tmp_path):
    with pytest.raises(InputError):
        load_dataset(tmp_path / "missing.jsonl")


def test_load_is_order_preserving(tmp_path, toy_dataset):
    path = tmp_path / "toy.jsonl"
    save_dataset(toy_dataset, path)
    loaded = load_dataset(path)
    assert [r.id for r in loaded] == [r.id for r in toy_dataset]
    assert loaded == toy_dataset


def test_stats_on_toy_dataset(toy_dataset):
    stats = dataset_stats(toy_dataset)
    assert stats.concept_count == 5
    assert stats.reference_count == 6
    assert stats.wsrc_eligible_count == 5


def test_stats_empty():
    stats = dataset_stats([])
    assert (stats.concept_count, stats.reference_count, stats.wsrc_eligible_count) == (0, 0, 0)


def test_stats_wsrc_eligibility():
    records = [
        ConceptRecord(id="a", target="t1", references=(ReferenceAnalogy("r1", "s"),)),
        ConceptRecord(id="b", target="t2"),
    ]
    stats = dataset_stats(records)
    assert stats.concept_count == 2
    assert stats.wsrc_eligible_count == 1


_printable = "abcdefghijklmnopqrstuvwxyz0123456789 '&-é世"
_ids = st.text(alphabet="abcdefghij0123456789-", min_size=1, max_size=8)
_texts = st.text(alphabet=_printable, min_size=0, max_size=40)
_nonempty = st.text(alphabet=_printable, min_size=0, max_size=29).map(lambda s: "w" + s)


@st.composite
def _datasets(draw):
    n = draw(st.integers(min_value=0, max_value=5))
    records = []
    for i in range(n):
        refs = tuple(
            ReferenceAnalogy(id=f"c{i}-r{j}", source=draw(_nonempty), text=draw(_texts))
            for j in range(draw(st.integers(min_value=0, max_value=3)))
        )
        records.append(
            ConceptRecord(
                id=f"c{i}-{draw(_ids)}",
                target=draw(_nonempty),
                references=refs,
                dataset_tag=draw(st.sampled_from(list(DatasetTag))),
            )
        )
    return records


@given(_datasets())
def test_serialize_roundtrip(records):
    assert parse_dataset(dump_dataset(records)) == records
