import json

import pytest

from analogybench.errors import (
    MissingSourceError,
    SchemaError,
    UnexpectedSourceError,
    UsageError,
)
from analogybench.prompts import (
    PromptStyle,
    PromptTemplate,
    TaskSetting,
    all_builtin_templates,
    builtin_templates,
    get_template,
    load_templates_file,
    question_statement_pairs,
    render,
)


def test_builtin_counts():
    assert len(builtin_templates(TaskSetting.NO_SRC)) == 5
    assert len(builtin_templates(TaskSetting.WSRC)) == 7
    assert len(builtin_templates(TaskSetting.NO_ANLGY)) == 3
    assert len(builtin_templates(TaskSetting.STD)) == 7
    assert len(all_builtin_templates()) == 22


def test_registry_ids_and_key_patterns():
    no_src = {t.id: t.pattern for t in builtin_templates("no_src")}
    assert no_src["NO_SRC.P4"] == "What analogy is used to explain <target>?"
    wsrc = {t.id: t.pattern for t in builtin_templates("wsrc")}
    assert wsrc["WSRC.P2"] == "Explain how <target> is analogous to <src>."
    no_anlgy = {t.id: t.pattern for t in builtin_templates("no_anlgy")}
    assert no_anlgy["NO_ANLGY.P3"] == "Explain <target> in plain language to a second grader."


def test_render_lowercases_target():
    template = get_template("NO_SRC.P3")
    assert render(template, "Natural Selection") == "Using an analogy, explain natural selection."


def test_render_wsrc_with_source():
    template = get_template("WSRC.P2")
    rendered = render(template, "Bohr's atomic model", "solar system")
    assert rendered == "Explain how bohr's atomic model is analogous to solar system."


def test_render_missing_source():
    with pytest.raises(MissingSourceError):
        render(get_template("WSRC.P2"), "atom")


def test_render_unexpected_source():
    with pytest.raises(UnexpectedSourceError):
        render(get_template("NO_SRC.P1"), "atom", "solar system")


def test_render_empty_target_rejected():
    with pytest.raises(UsageError):
        render(get_template("NO_SRC.P1"), "   ")


def test_style_matches_question_mark_rule():
    for template in all_builtin_templates():
        expected = PromptStyle.QUESTION if template.pattern.endswith("?") else PromptStyle.STATEMENT
        assert template.style is expected


def test_question_prompts_are_the_documented_ones():
    questions = {
        t.id for t in all_builtin_templates() if t.style is PromptStyle.QUESTION
    }
    assert questions == {
        "NO_SRC.P4", "WSRC.P5", "WSRC.P6", "WSRC.P7",
        "NO_ANLGY.P2", "STD.P3", "STD.P6", "STD.P7",
    }


def test_render_reverse_substitution_recovers_pattern():
    target, src = "zzqqtarget", "zzqqsource"
    for template in all_builtin_templates():
        uses_src = template.setting is TaskSetting.WSRC
        rendered = render(template, target, src if uses_src else None)
        recovered = rendered.replace(target, "<target>")
        if uses_src:
            recovered = recovered.replace(src, "<src>")
        assert recovered == template.pattern


def test_placeholder_invariants_enforced():
    with pytest.raises(SchemaError):
        PromptTemplate(id="bad", setting=TaskSetting.NO_SRC, pattern="no placeholder here")
    with pytest.raises(SchemaError):
        PromptTemplate(id="bad", setting=TaskSetting.NO_SRC, pattern="<target> and <target>")
    with pytest.raises(SchemaError):
        PromptTemplate(id="bad", setting=TaskSetting.WSRC, pattern="only <target>")
    with pytest.raises(SchemaError):
        PromptTemplate(id="bad", setting=TaskSetting.NO_ANLGY, pattern="<target> with <src>")


def test_question_statement_pairs_wsrc():
    assert question_statement_pairs(TaskSetting.WSRC) == [("P2", "P5"), ("P3", "P6"), ("P4", "P7")]


def test_question_statement_pairs_no_src():
    pairs = question_statement_pairs("no_src")
    assert pairs == [("P1", "P4"), ("P2", "P4"), ("P3", "P4"), ("P5", "P4")]


def test_question_statement_pairs_undefined_setting():
    with pytest.raises(UsageError):
        question_statement_pairs(TaskSetting.NO_ANLGY)


def test_load_templates_file(tmp_path):
    path = tmp_path / "templates.json"
    path.write_text(
        json.dumps(
            [
                {"id": "CUSTOM.P1", "setting": "no_src", "pattern": "Sketch <target> with an analogy."},
                {"id": "CUSTOM.P2", "setting": "wsrc", "pattern": "Relate <target> to <src>?"},
            ]
        ),
        encoding="utf-8",
    )
    templates = load_templates_file(path)
    assert [t.id for t in templates] == ["CUSTOM.P1", "CUSTOM.P2"]
    assert templates[1].style is PromptStyle.QUESTION


def test_load_templates_file_enforces_invariants(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(
        json.dumps([{"id": "X", "setting": "no_src", "pattern": "missing placeholder"}]),
        encoding="utf-8",
    )
    with pytest.raises(SchemaError):
        load_templates_file(path)
