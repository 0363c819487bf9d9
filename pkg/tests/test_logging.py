import json
import logging

from src.core.logging import JSONFormatter, log_with_context
from src.services.scenario_service import ScenarioService, load_config


def test_context_lands_on_the_record(caplog):
    logger = logging.getLogger("tests.context")
    with caplog.at_level(logging.INFO, logger="tests.context"):
        log_with_context(logger, "WARNING", "chi measured", run_id="r1", chi=5.817)
    record = caplog.records[-1]
    assert record.levelname == "WARNING"
    assert record.getMessage() == "chi measured"
    assert record.run_id == "r1"
    assert record.chi == 5.817


def test_json_formatter_keeps_context(caplog):
    logger = logging.getLogger("tests.json")
    with caplog.at_level(logging.INFO, logger="tests.json"):
        log_with_context(
            logger, "info", "grid done", run_id="r2", duration=0.5, axes=("eta", "phi")
        )
    payload = json.loads(JSONFormatter().format(caplog.records[-1]))
    assert payload["level"] == "INFO"
    assert payload["run_id"] == "r2"
    assert payload["duration"] == 0.5
    assert payload["axes"] == ["eta", "phi"]


def test_scenario_summary_lists_failed_verdicts(caplog):
    config = load_config(overrides={"mode": "bounds", "bound_model": "lhv"})
    with caplog.at_level(logging.INFO, logger="src.services.scenario_service"):
        ScenarioService().run_scenario(config)
    summary = [r for r in caplog.records if r.getMessage().startswith("Scenario finished")]
    assert summary[-1].levelname == "WARNING"
    assert summary[-1].failed_verdicts == ["lhv-contextual-bound"]
