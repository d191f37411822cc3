from __future__ import annotations

import pytest

from datamator.config import Config, RemoteModelConfig
from datamator.corpus import bundled_dataset
from datamator.decomposer import (
    CandidateSet,
    HttpModelClient,
    NoPatternMatch,
    Protocol_,
    Resolution,
    Transport,
    decompose_remote,
    decompose_rules,
    load_prompt_template,
    resolve,
)
from datamator.executor import execute
from datamator.linker import link
from datamator.model import Op
from datamator.text import NoValidCandidate, parse, serialize, validate

from conftest import FIG2_TEXT, students_dataset


class StubClient:
    def __init__(self, texts):
        self.texts = texts
        self.prompts = []

    def complete(self, prompt, n):
        self.prompts.append(prompt)
        return [(t, 1.0 - 0.1 * i) for i, t in enumerate(self.texts[:n])]


class TestRules:
    def test_p1_reproduces_worked_four_step_pipeline(self, dataset, schema):
        ranked = link("how many students were born in 2000?", schema)
        cset = decompose_rules("how many students were born in 2000?", ranked, schema)
        best = parse(cset.candidates[0][0])
        assert [s.op for s in best.steps] == [Op.SELECT, Op.PROJECT, Op.FILTER, Op.AGGREGATE]
        assert best == parse(serialize(parse(FIG2_TEXT.replace("Students", "students").replace("Birth Year", "birth_year"))))
        assert execute(best, dataset).answer == 2

    def test_p4_superlative(self, schema):
        q = "which student has the most birth_year?"
        cset = decompose_rules(q, link(q, schema), schema)
        pipeline = parse(cset.candidates[0][0])
        assert [s.op for s in pipeline.steps] == [Op.SELECT, Op.SUPERLATIVE]

    def test_p3_group(self):
        ds = bundled_dataset("graduates")
        q = "what is the average salary for each city?"
        cset = decompose_rules(q, link(q, ds.schema), ds.schema)
        pipeline = parse(cset.candidates[0][0])
        assert [s.op for s in pipeline.steps] == [Op.SELECT, Op.PROJECT, Op.PROJECT, Op.GROUP]

    def test_p5_sort_direction(self):
        ds = bundled_dataset("vehicles")
        q = "list vehicles sorted by horsepower desc"
        cset = decompose_rules(q, link(q, ds.schema), ds.schema)
        assert "SORT[#1, 'horsepower', desc]" in cset.candidates[0][0]

    def test_no_pattern(self, schema):
        q = "tell me something interesting"
        with pytest.raises(NoPatternMatch):
            decompose_rules(q, link(q, schema), schema)

    def test_all_rule_candidates_validate(self, schema):
        questions = [
            "how many students?",
            "how many students were born in 2000?",
            "what is the average id of students?",
            "which student has the most birth_year?",
            "list students sorted by name",
        ]
        for q in questions:
            cset = decompose_rules(q, link(q, schema), schema)
            for text, _ in cset.candidates:
                assert validate(parse(text), schema).valid, text

    def test_ranking_breaks_lexical_ties(self):
        from datamator.linker import ConstantScorer
        from datamator.model import ColumnType, make_schema

        # two columns tie lexically on the span; the ranked order decides
        schema = make_schema(
            [
                (
                    "trips",
                    [
                        ("cost_total", ColumnType.NUMERICAL),
                        ("cost_extra", ColumnType.NUMERICAL),
                    ],
                )
            ]
        )
        q = "what is the average cost of trips?"
        ranked = link(q, schema)
        cset = decompose_rules(q, ranked, schema)
        # both tokens score 0.5 on "cost"; declaration order ranks cost_total first
        assert "'cost_total'" in cset.candidates[0][0]


class TestRemote:
    def test_stub_pass_through_order(self, schema):
        ranked = link("how many students?", schema)
        texts = ["SELECT['students']", "SELECT['students']; AGGREGATE[count, #1]"]
        cset = decompose_remote("how many students?", ranked, StubClient(texts))
        assert cset.source == "remote"
        assert [c[0] for c in cset.candidates] == texts

    def test_prompt_embeds_ranked_schema(self, schema):
        ranked = link("how many students were born in 2000?", schema)
        client = StubClient(["SELECT['students']"])
        decompose_remote("how many students were born in 2000?", ranked, client)
        assert ranked.serialized.text in client.prompts[0]
        assert "how many students were born in 2000?" in client.prompts[0]

    def test_malformed_candidates_kept_for_downstream_filtering(self, schema):
        ranked = link("how many students?", schema)
        texts = ["garbage[", "SELECT['missing']", FIG2_TEXT, "also garbage", "SELECT['students']"]
        cset = decompose_remote("q", ranked, StubClient(texts))
        assert len(cset.candidates) == 5  # nothing filtered here

    def test_http_client_timeout_is_transport(self, monkeypatch):
        import httpx

        def boom(*args, **kwargs):
            raise httpx.ConnectTimeout("nope")

        monkeypatch.setattr(httpx, "post", boom)
        client = HttpModelClient(RemoteModelConfig(endpoint="http://127.0.0.1:1/x", retry_budget=1))
        with pytest.raises(Transport):
            client.complete("p", 5)

    def test_http_client_malformed_is_protocol(self, monkeypatch):
        import httpx

        class FakeResponse:
            status_code = 200

            def raise_for_status(self):
                return None

            def json(self):
                return {"unexpected": []}

        monkeypatch.setattr(httpx, "post", lambda *a, **k: FakeResponse())
        client = HttpModelClient(RemoteModelConfig(endpoint="http://example.invalid"))
        with pytest.raises(Protocol_):
            client.complete("p", 5)

    def test_retry_budget_respected(self, monkeypatch):
        import httpx

        calls = []

        def boom(*args, **kwargs):
            calls.append(1)
            raise httpx.ConnectError("nope")

        monkeypatch.setattr(httpx, "post", boom)
        client = HttpModelClient(
            RemoteModelConfig(endpoint="http://example.invalid", retry_budget=2)
        )
        with pytest.raises(Transport):
            client.complete("p", 5)
        assert len(calls) == 3  # initial try + 2 retries


class TestResolve:
    def test_worked_example_end_to_end(self):
        ds = students_dataset()
        res = resolve("how many students were born in 2000?", ds)
        assert isinstance(res, Resolution)
        assert execute(res.pipeline, ds).answer == 2
        assert res.candidates.source == "rules"

    def test_no_pattern_and_no_remote(self):
        ds = students_dataset()
        with pytest.raises(NoPatternMatch):
            resolve("tell me something interesting", ds)

    def test_remote_fallback_picks_first_valid(self):
        ds = students_dataset()
        client = StubClient(["SELECT['missing']", FIG2_TEXT])
        res = resolve("tell me something interesting", ds, client=client)
        assert res.chosen_index == 1
        assert res.candidates.source == "remote"
        assert execute(res.pipeline, ds).answer == 2

    def test_remote_all_invalid(self):
        ds = students_dataset()
        client = StubClient(["garbage[", "SELECT['missing']"])
        with pytest.raises(NoValidCandidate):
            resolve("tell me something interesting", ds, client=client)

    def test_resolve_never_returns_invalid(self):
        ds = students_dataset()
        for q in ["how many students?", "list students sorted by id"]:
            res = resolve(q, ds)
            assert validate(res.pipeline, ds.schema).valid

    def test_prompt_template_is_versioned(self):
        assert load_prompt_template().startswith("# prompt-template v")
