import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ontoforge.trials import (
    ClinicalTrial,
    EncodingError,
    InvalidNctId,
    MalformedRow,
    MissingColumn,
    parse_trials_csv,
    read_trials,
    write_trials_csv,
)

HEADER = "NCT Number,Primary Outcome Measures,Secondary Outcome Measures,Conditions\r\n"


def test_fixture_of_fifty_rows(corpus_dir):
    result = read_trials(corpus_dir / "trials50.csv")
    assert len(result.trials) == 50
    assert result.warnings == []
    assert all(t.condition.startswith("Diabetes") for t in result.trials)


def test_header_only():
    result = parse_trials_csv(HEADER.encode())
    assert result.trials == [] and result.warnings == []


def test_empty_input():
    assert parse_trials_csv(b"").trials == []


def test_quoted_comma_and_newline():
    data = HEADER + 'NCT00000001,"HbA1c, fasting glucose","Weight\r\nand BMI",Diabetes\r\n'
    (trial,) = parse_trials_csv(data.encode()).trials
    # RFC 4180 by hand: quoted field 2 keeps its comma, field 3 its CRLF
    assert trial.primary_outcomes == "HbA1c, fasting glucose"
    assert trial.secondary_outcomes == "Weight\r\nand BMI"
    assert trial.condition == "Diabetes"


def test_escaped_quotes():
    data = HEADER + 'NCT00000001,"Score on the ""PAID"" scale",,Diabetes\r\n'
    (trial,) = parse_trials_csv(data.encode()).trials
    assert trial.primary_outcomes == 'Score on the "PAID" scale'


def test_row_order_preserved():
    rows = "".join(f"NCT{i:08d},p{i},s{i},D\r\n" for i in (5, 3, 9))
    ids = [t.nct_id for t in parse_trials_csv((HEADER + rows).encode()).trials]
    assert ids == ["NCT00000005", "NCT00000003", "NCT00000009"]


def test_duplicates_keep_first():
    data = HEADER + "NCT00000001,a,b,D\r\nNCT00000001,c,d,D\r\n"
    result = parse_trials_csv(data.encode())
    assert [t.primary_outcomes for t in result.trials] == ["a"]
    assert [w.kind for w in result.warnings] == ["DuplicateNctId"]


def test_empty_outcomes_flagged_not_dropped():
    data = HEADER + "NCT00000001,,,D\r\n"
    result = parse_trials_csv(data.encode())
    assert len(result.trials) == 1 and not result.trials[0].promotable
    assert result.warnings[0].kind == "EmptyOutcomes" and not result.warnings[0].dropped


def test_missing_column():
    with pytest.raises(MissingColumn):
        parse_trials_csv(b"NCT Number,Primary Outcome Measures\r\nNCT00000001,a\r\n")


def test_column_map_override():
    data = b"id,prim,sec\r\nNCT00000001,a,b\r\n"
    result = parse_trials_csv(data, {"nct_id": "id", "primary_outcomes": "prim", "secondary_outcomes": "sec"})
    assert result.trials == [ClinicalTrial("NCT00000001", "a", "b", "")]


def test_unknown_column_key():
    with pytest.raises(MissingColumn):
        parse_trials_csv(HEADER.encode(), {"title": "Study Title"})


def test_invalid_nct_warns_or_raises():
    data = (HEADER + "NCT123,a,b,D\r\nNCT00000002,a,b,D\r\n").encode()
    result = parse_trials_csv(data)
    assert [t.nct_id for t in result.trials] == ["NCT00000002"]
    assert result.warnings[0].kind == "InvalidNctId"
    with pytest.raises(InvalidNctId):
        parse_trials_csv(data, strict=True)


def test_unbalanced_quote_is_malformed():
    data = (HEADER + 'NCT00000001,"a"x,b,D\r\nNCT00000002,a,b,D\r\n').encode()
    result = parse_trials_csv(data)
    assert [t.nct_id for t in result.trials] == ["NCT00000002"]
    assert result.warnings[0].kind == "MalformedRow"
    with pytest.raises(MalformedRow):
        parse_trials_csv(data, strict=True)


def test_unterminated_quote_at_eof():
    result = parse_trials_csv((HEADER + 'NCT00000001,"never closed,b,D\r\n').encode())
    assert result.trials == [] and result.rejected == 1


def test_wrong_field_count():
    result = parse_trials_csv((HEADER + "NCT00000001,a,b\r\n").encode())
    assert result.warnings[0].kind == "MalformedRow"


def test_non_utf8_is_hard_error():
    with pytest.raises(EncodingError):
        parse_trials_csv(HEADER.encode() + b"NCT00000001,caf\xe9,b,D\r\n")


def test_accepts_file_objects_and_bom():
    data = "﻿" + HEADER + "NCT00000001,a,b,D\r\n"
    assert len(parse_trials_csv(io.BytesIO(data.encode("utf-8"))).trials) == 1


outcome_text = st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00\r"), max_size=40)
trial_lists = st.lists(
    st.builds(
        ClinicalTrial,
        st.integers(0, 10**8 - 1).map(lambda i: f"NCT{i:08d}"),
        outcome_text,
        outcome_text,
        outcome_text,
    ),
    max_size=8,
    unique_by=lambda t: t.nct_id,
)


@given(trial_lists)
def test_parse_serialize_parse_fixpoint(trials):
    first = parse_trials_csv(write_trials_csv(trials).encode()).trials
    second = parse_trials_csv(write_trials_csv(first).encode()).trials
    assert first == second == trials


@given(st.lists(st.sampled_from(["NCT00000001,a,b,D", "NCT00000002,,,D", "bad,a,b,D", 'NCT00000003,"x"y,b,D', "NCT00000004,a,b"]), max_size=12))
def test_every_row_is_kept_or_counted(rows):
    result = parse_trials_csv((HEADER + "".join(r + "\r\n" for r in rows)).encode())
    assert result.data_rows == len(rows)
    assert len(result.trials) + result.rejected == len(rows)
