"""
Тесты командной строки: коды возврата, текстовый и структурированный вывод.
"""

import io
import json

import pytest

from cli import run_cli
from core.policy_dsl import render
from tests.conftest import BOOT_RUN_SHUTDOWN, EVIL_MAID_CASE, EVIL_MAID_ERROR, REFERENCE


@pytest.fixture
def cli(tmp_path):
    """run_cli с изолированной конфигурацией; возвращает (код, stdout, stderr)"""
    config = str(tmp_path / "absent.json")

    def invoke(*argv, model=(REFERENCE,)):
        stdout, stderr = io.StringIO(), io.StringIO()
        args = ["--config", config]
        for path in model:
            args += ["-m", path]
        code = run_cli(args + list(argv), stdout, stderr)
        return code, stdout.getvalue(), stderr.getvalue()

    return invoke


def structured(cli, *argv, **kwargs):
    code, out, _ = cli("--format", "structured", *argv, **kwargs)
    return code, json.loads(out)


class TestValidate:

    def test_non_heyting_lattice_is_error(self, cli):
        code, out, _ = cli("validate")
        assert code == 1
        assert "NotDistributive" in out

    def test_allow_nonheyting(self, cli):
        code, payload = structured(cli, "--allow-nonheyting", "validate")
        assert code == 0
        assert payload["errors"] == 0
        kinds = {d["kind"] for d in payload["diagnostics"]}
        assert {"NotDistributive", "NoImplication"} <= kinds

    def test_extra_files(self, cli):
        code, payload = structured(cli, "--allow-nonheyting", "validate", EVIL_MAID_ERROR)
        assert code == 0
        assert payload["errors"] == 0

    def test_parse_error_is_usage_error(self, cli, tmp_path):
        broken = tmp_path / "broken.trust"
        broken.write_text("trust-dsl 2\n", encoding="utf-8")
        code, _, err = cli("validate", model=(str(broken),))
        assert code == 2
        assert "broken.trust:1:1" in err


class TestEval:

    def test_healthy_element(self, cli):
        code, out, _ = cli("eval", "pc1")
        assert code == 0
        assert out.splitlines()[0] == "TOP"

    def test_unattestable_element_is_refused(self, cli):
        code, out, _ = cli("eval", "cold_unit")
        assert code == 1
        assert out.splitlines()[0] == "BOTTOM"

    def test_all_points(self, cli):
        code, payload = structured(cli, "eval", "pc1", "--all")
        assert code == 0
        levels = {r["point"]: r["level"] for r in payload["results"]}
        assert levels["quote:standard_verify:standard_decide"] == "TOP"
        assert levels["token_only:standard_verify:standard_decide"] == "D_AUTH"
        assert levels["measure_only:measure_verify:standard_decide"] == "D_M"

    def test_every_element(self, cli):
        code, payload = structured(cli, "eval", "--all")
        assert code == 0
        levels = {r["element"]: r["level"] for r in payload["elements"]}
        assert levels == {
            "bare_box": None, "cold_unit": "BOTTOM", "gas_sensor": None, "pc1": "TOP",
            "pc2": "TOP", "pc_compromised": "D_S", "pc_impersonated": "D_M", "pc_new": "D_NEW",
            "rack": "TOP", "sensor1": "D_M", "ventilator_mainboard": "TOP",
        }

    def test_element_or_all_required(self, cli):
        code, _, _ = cli("eval")
        assert code == 2

    def test_explicit_point(self, cli):
        code, out, _ = cli("--point", "token_only:standard_verify:alt_decide", "eval", "pc1")
        assert code == 0
        assert out.splitlines()[0] == "D_S"

    def test_structured_output_is_reproducible(self, cli):
        first = cli("--format", "structured", "eval", "pc1")
        second = cli("--format", "structured", "eval", "pc1")
        assert first == second

    def test_unknown_element(self, cli):
        code, _, err = cli("eval", "ghost")
        assert code == 2
        assert "ghost" in err

    def test_restricted_point(self, cli):
        code, _, _ = cli("--point", "quote:standard_verify:standard_decide", "eval", "sensor1")
        assert code == 1

    def test_malformed_point(self, cli):
        code, _, _ = cli("--point", "quote", "eval", "pc1")
        assert code == 2


class TestReports:

    def test_forensics(self, cli):
        code, payload = structured(cli, "forensics", "pc_compromised")
        assert code == 0
        assert payload["failed_atoms"] == ["chi_m"]
        assert payload["level"] == "D_S"

    def test_potential(self, cli):
        code, payload = structured(cli, "potential", "sensor1", "--bound", "D_M")
        assert code == 0
        assert payload["potential"] == ["BOTTOM", "D_M"]
        assert payload["class"] == "TrustableWrtBound"

    def test_untrustable(self, cli):
        code, out, _ = cli("potential", "bare_box")
        assert code == 1
        assert "Untrustable" in out

    def test_gap(self, cli):
        code, payload = structured(cli, "gap", "D_S", "TOP")
        assert code == 0
        assert payload["implication"] == "TOP"
        assert "chi_m=true" in payload["paths"][0]["missing"]

    def test_gap_unknown_level(self, cli):
        code, _, _ = cli("gap", "D_S", "D_X")
        assert code == 2


class TestScenarios:

    def test_evil_maid_error_routing(self, cli):
        code, payload = structured(cli, "scenario", EVIL_MAID_ERROR)
        assert code == 0
        assert [t["final_level"] for t in payload["traces"]] == ["BOTTOM"]

    def test_evil_maid_case_table(self, cli):
        code, out, _ = cli("scenario", EVIL_MAID_CASE)
        assert code == 0
        assert "PASS" in out

    def test_weak_phases_fail(self, cli):
        code, payload = structured(cli, "scenario", BOOT_RUN_SHUTDOWN, "--name", "boot_run_shutdown_weak")
        assert code == 1
        assert not payload["traces"][0]["passed"]

    def test_all_scenarios_of_file(self, cli):
        code, payload = structured(cli, "scenario", BOOT_RUN_SHUTDOWN)
        assert code == 1
        assert [t["scenario"] for t in payload["traces"]] == [
            "boot_run_shutdown", "boot_run_shutdown_weak", "restart_keeps_identity"]

    def test_unknown_scenario(self, cli):
        code, _, _ = cli("scenario", BOOT_RUN_SHUTDOWN, "--name", "nope")
        assert code == 2


class TestOperationsAndTrees:

    def test_classify_idempotent(self, cli):
        code, out, _ = cli("classify", "noop", "--elements", "pc1", "pc2", "sensor1")
        assert code == 0
        assert out.startswith("noop (idempotent): OK")

    def test_classify_dangerous(self, cli):
        code, _, _ = cli("classify", "swap_firmware")
        assert code == 0

    def test_classify_undeclared(self, cli):
        code, _, _ = cli("classify", "teleport")
        assert code == 2

    def test_aggregate_meet(self, cli):
        code, payload = structured(cli, "aggregate", "ventilator")
        assert code == 1
        assert payload["level"] == "BOTTOM"

    def test_aggregate_mediated(self, cli):
        code, payload = structured(cli, "aggregate", "ventilator", "--mode", "mediated")
        assert code == 0
        assert payload["level"] == "TOP"

    def test_aggregate_rack(self, cli):
        code, out, _ = cli("aggregate", "rack_view")
        assert code == 0
        assert "D_M" in out


class TestLatticeAndRender:

    def test_complete_lattice(self, cli):
        code, payload = structured(cli, "complete-lattice")
        assert code == 0
        assert len(payload["levels"]) == 8
        assert "D_AUTH+D_M" in payload["levels"]

    def test_complete_lattice_text_is_a_document(self, cli):
        code, out, _ = cli("complete-lattice")
        assert code == 0
        assert out.startswith("trust-dsl 1")

    def test_render_matches_library(self, cli, reference_model):
        code, out, _ = cli("render")
        assert code == 0
        assert out == render(reference_model)


class TestConfiguration:

    def test_model_files_from_config(self, tmp_path):
        config = tmp_path / "trust_config.json"
        config.write_text(json.dumps({"model_files": [REFERENCE], "output": {"format": "structured"}}),
                          encoding="utf-8")
        stdout, stderr = io.StringIO(), io.StringIO()
        code = run_cli(["--config", str(config), "eval", "pc1"], stdout, stderr)
        assert code == 0
        assert json.loads(stdout.getvalue())["results"][0]["level"] == "TOP"

    def test_no_model_is_usage_error(self, cli):
        code, _, err = cli("eval", "pc1", model=())
        assert code == 2
        assert "-m" in err

    def test_missing_model_file(self, cli, tmp_path):
        code, _, _ = cli("eval", "pc1", model=(str(tmp_path / "none.trust"),))
        assert code == 2

    def test_audit_journal(self, cli, tmp_path):
        audit_dir = tmp_path / "audit"
        code, _, _ = cli("--audit-dir", str(audit_dir), "eval", "pc1")
        assert code == 0
        assert list(audit_dir.glob("*.json"))

    def test_report_copy_to_file(self, cli, tmp_path):
        target = tmp_path / "report.json"
        code, out, _ = cli("--output", str(target), "forensics", "pc_impersonated")
        assert code == 0
        assert out.startswith("element: pc_impersonated")
        assert json.loads(target.read_text(encoding="utf-8"))["failed_atoms"] == ["chi_s"]

    def test_missing_subcommand(self, cli):
        code, _, _ = cli()
        assert code == 2


class TestConfigCommand:

    def test_init_writes_defaults(self, cli, tmp_path):
        code, out, _ = cli("config", "init", model=())
        assert code == 0
        saved = json.loads((tmp_path / "absent.json").read_text(encoding="utf-8"))
        assert saved["endpoints"]["agent"] == "127.0.0.1:7401"
        assert "output.format = text" in out

    def test_init_keeps_existing_file(self, cli, tmp_path):
        assert cli("config", "init", model=())[0] == 0
        code, _, err = cli("config", "init", model=())
        assert code == 2
        assert "absent.json" in err

    def test_set_is_persisted_and_used(self, cli, tmp_path):
        assert cli("config", "set", "endpoints.verifier", "10.0.0.5:9000", model=())[0] == 0
        assert cli("config", "set", "output.format", "structured", model=())[0] == 0
        saved = json.loads((tmp_path / "absent.json").read_text(encoding="utf-8"))
        assert saved["endpoints"]["verifier"] == "10.0.0.5:9000"
        assert saved["output"]["format"] == "structured"
        code, out, _ = cli("eval", "pc1")
        assert code == 0
        assert json.loads(out)["results"][0]["level"] == "TOP"

    def test_set_flag(self, cli):
        assert cli("config", "set", "lattice.allow_nonheyting", "true", model=())[0] == 0
        code, _, _ = cli("validate")
        assert code == 0

    def test_bad_endpoint_is_not_saved(self, cli, tmp_path):
        code, _, _ = cli("config", "set", "endpoints.agent", "nohost", model=())
        assert code == 2
        assert not (tmp_path / "absent.json").exists()

    def test_unknown_key(self, cli):
        code, _, err = cli("config", "set", "audit.colour", "red", model=())
        assert code == 2
        assert "endpoints.agent" in err

    def test_show(self, cli):
        code, payload = structured(cli, "config", "show", model=())
        assert code == 0
        assert payload["config"]["lattice"]["allow_nonheyting"] is False
