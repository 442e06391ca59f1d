import time

from bimq.errors import BackendUnavailable
from bimq.llm import FunctionBackend, RecordingBackend, ScriptBackend, open_replay
from bimq.pipeline import FAILURE_TEXT, PipelineConfig, run_query
from bimq.prompts import FEW_ONLY
from helpers import ASK_SCRIPT, PUMP_QUERY, PUMP_SCRIPT, PUMP_SUMMARY


def config(**kwargs):
    return PipelineConfig(**kwargs)


class TestSearchRoute:
    def test_pump_walkthrough(self, hospital_store):
        start = time.monotonic()
        answer = run_query(hospital_store, ScriptBackend(PUMP_SCRIPT), config(), PUMP_QUERY)
        elapsed = time.monotonic() - start
        assert answer.ok is True
        assert answer.text == PUMP_SUMMARY
        assert answer.retrieved_ids == ["14569"]
        assert [stage.name for stage in answer.trace] == [
            "intent", "parameter", "value", "db_execute", "summary"]
        assert answer.generations == 4
        structured = answer.structured_query()
        assert structured.intent == "search"
        assert structured.category == "Pumps"
        assert structured.filter_parameter == "component_id"
        assert structured.filter_value == "14569"
        assert structured.projection_parameter == "manufacturer"
        assert elapsed < 1.0

    def test_count_route(self, hospital_store):
        script = [
            "A: [count in BIM] of 'Pumps'",
            "A: filter_para: component_id; proj_para: quantity",
            "A: extr_value: '14569'; pred_value: '14569'",
            "There is exactly one pump with that id.",
        ]
        answer = run_query(hospital_store, ScriptBackend(script), config(), "how many?")
        assert answer.ok
        assert answer.generations == 4
        structured = answer.structured_query()
        assert structured.intent == "count"
        assert structured.projection_parameter == "quantity"
        assert answer.retrieved_ids == ["14569"]

    def test_quantity_projection_forces_count(self, hospital_store):
        script = [
            "A: [search in BIM] for 'Pumps'",
            "A: filter_para: component_id; proj_para: quantity",
            "A: extr_value: '14569'; pred_value: '14569'",
            "One match.",
        ]
        answer = run_query(hospital_store, ScriptBackend(script), config(), "count pumps")
        assert answer.structured_query().intent == "count"

    def test_case_insensitive_category_and_parameter(self, hospital_store):
        script = [
            "A: [search in BIM] for 'pumps'",
            "A: filter_para: Component_ID; proj_para: MANUFACTURER",
            "A: extr_value: '14569'; pred_value: '14569'",
            "done",
        ]
        answer = run_query(hospital_store, ScriptBackend(script), config(), PUMP_QUERY)
        assert answer.ok
        structured = answer.structured_query()
        assert structured.category == "Pumps"
        assert structured.filter_parameter == "component_id"
        assert structured.projection_parameter == "manufacturer"

    def test_fallback_to_extracted_value(self, hospital_store):
        script = [
            "A: [search in BIM] for 'Pumps'",
            "A: filter_para: component_id; proj_para: manufacturer",
            "A: extr_value: '14569'; pred_value: 'pump-14569'",
            "fallback summary",
        ]
        answer = run_query(hospital_store, ScriptBackend(script), config(), PUMP_QUERY)
        assert answer.ok
        assert answer.retrieved_ids == ["14569"]
        db_stage = answer.trace[3]
        assert db_stage.parsed["fallback_used"] is True
        assert len(db_stage.db_calls) == 2
        assert answer.structured_query().filter_value == "14569"

    def test_no_match_proceeds_with_empty_result(self, hospital_store):
        script = [
            "A: [search in BIM] for 'Pumps'",
            "A: filter_para: component_id; proj_para: manufacturer",
            "A: extr_value: 'nothing'; pred_value: 'nowhere'",
            "No matching records were found.",
        ]
        answer = run_query(hospital_store, ScriptBackend(script), config(), "find the void")
        assert answer.ok
        assert answer.retrieved_ids == []
        assert answer.trace[3].parsed["result"].count == 0
        assert answer.text == "No matching records were found."


class TestAskRoute:
    def test_two_generations(self, hospital_store):
        answer = run_query(hospital_store, ScriptBackend(ASK_SCRIPT), config(), "What is BIM?")
        assert answer.ok
        assert answer.generations == 2
        assert [stage.name for stage in answer.trace] == ["intent", "general"]
        assert answer.retrieved_ids == []
        assert answer.text == ASK_SCRIPT[1]


class TestFailures:
    def test_gibberish_intent(self, hospital_store):
        answer = run_query(hospital_store, ScriptBackend(["gibberish"]), config(), "?")
        assert answer.ok is False
        assert answer.failure_stage == "intent"
        assert FAILURE_TEXT in answer.text
        assert "intent" in answer.text
        assert len(answer.trace) == 1
        assert answer.trace[0].error is not None

    def test_unknown_category(self, hospital_store):
        answer = run_query(
            hospital_store, ScriptBackend(["A: [search in BIM] for 'Spaceships'"]),
            config(), "find spaceships")
        assert answer.ok is False
        assert answer.failure_stage == "intent"

    def test_unknown_parameter(self, hospital_store):
        script = ["A: [search in BIM] for 'Pumps'", "A: filter_para: colour; proj_para: manufacturer"]
        answer = run_query(hospital_store, ScriptBackend(script), config(), "?")
        assert answer.ok is False
        assert answer.failure_stage == "parameter"
        assert [stage.name for stage in answer.trace] == ["intent", "parameter"]

    def test_backend_error_surfaces_as_stage_failure(self, hospital_store):
        calls = {"n": 0}

        def flaky(request):
            calls["n"] += 1
            if calls["n"] == 2:
                raise BackendUnavailable("down")
            return PUMP_SCRIPT[calls["n"] - 1]

        answer = run_query(hospital_store, FunctionBackend(flaky), config(), PUMP_QUERY)
        assert answer.ok is False
        assert answer.failure_stage == "parameter"

    def test_budget_infeasible_fails_gracefully(self, hospital_store):
        answer = run_query(
            hospital_store, ScriptBackend(PUMP_SCRIPT), config(budget=40), PUMP_QUERY)
        assert answer.ok is False
        assert answer.failure_stage == "intent"


class TestTraceContracts:
    def test_on_stage_callback_order(self, hospital_store):
        seen = []
        answer = run_query(
            hospital_store, ScriptBackend(PUMP_SCRIPT), config(), PUMP_QUERY,
            on_stage=lambda stage: seen.append(stage.name))
        assert seen == [stage.name for stage in answer.trace]

    def test_traced_prompts_keep_section_order(self, hospital_store):
        answer = run_query(hospital_store, ScriptBackend(PUMP_SCRIPT), config(), PUMP_QUERY)
        for stage in answer.trace:
            if stage.prompt is None:
                continue
            kinds = [section.kind for section in stage.prompt.sections]
            assert kinds == sorted(kinds)

    def test_stage_summaries_render(self, hospital_store):
        answer = run_query(hospital_store, ScriptBackend(PUMP_SCRIPT), config(), PUMP_QUERY)
        lines = [stage.summary_line() for stage in answer.trace]
        assert lines[0] == "[search in BIM] for 'Pumps'"
        assert lines[3] == "1 records matched"

    def test_composition_respected_in_trace(self, hospital_store):
        answer = run_query(
            hospital_store, ScriptBackend(PUMP_SCRIPT),
            config(composition=FEW_ONLY), PUMP_QUERY)
        for stage in answer.trace:
            if stage.prompt is not None:
                assert "Task instruction:" not in stage.prompt.flat_text


class TestDeterminism:
    def test_record_then_replay_identical_answers(self, hospital_store, tmp_path):
        recorder = RecordingBackend(ScriptBackend(PUMP_SCRIPT))
        first = run_query(hospital_store, recorder, config(), PUMP_QUERY)
        path = tmp_path / "walkthrough.json"
        recorder.cassette.save(path)

        replay = open_replay(path)
        second = run_query(hospital_store, replay, config(), PUMP_QUERY)
        third = run_query(hospital_store, replay, config(), PUMP_QUERY)
        for other in (second, third):
            assert other.text == first.text
            assert other.retrieved_ids == first.retrieved_ids
            assert other.ok is first.ok
            assert [s.name for s in other.trace] == [s.name for s in first.trace]
        assert second.trace[0].prompt.flat_text == first.trace[0].prompt.flat_text
