"""
Acceptance Test Script for the Contextuality-Nonlocality Simulator
==================================================================
Runs every CLI subcommand of main.py in a subprocess, checks exit codes,
report structure and the headline numbers, and outputs a final score.
"""

import csv
import json
import os
import subprocess
import sys
import tempfile
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from dotenv import load_dotenv

load_dotenv()

# =============================================================================
# CONFIGURATION
# =============================================================================
ROOT = Path(__file__).parent
MAIN = ROOT / "main.py"
OUTPUT_FILE = "acceptance_output.txt"
TIMEOUT = int(os.getenv("ACCEPTANCE_TIMEOUT", "600"))


# =============================================================================
# HELPER CLASSES
# =============================================================================
class Colors:
    """ANSI color codes for terminal output"""

    GREEN = "\033[92m"
    RED = "\033[91m"
    YELLOW = "\033[93m"
    BLUE = "\033[94m"
    RESET = "\033[0m"
    BOLD = "\033[1m"


class Logger:
    """Dual logger: writes to both console and file"""

    def __init__(self, filename: str):
        self.filename = filename
        with open(self.filename, "w", encoding="utf-8") as f:
            f.write(f"{'=' * 70}\n")
            f.write(
                "Simulator acceptance run: "
                f"{datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n"
            )
            f.write(f"{'=' * 70}\n\n")

    def log(self, message: str, color: str = "", file_only: bool = False):
        if not file_only:
            print(f"{color}{message}{Colors.RESET if color else ''}")
        with open(self.filename, "a", encoding="utf-8") as f:
            f.write(message + "\n")


logger = Logger(OUTPUT_FILE)


# =============================================================================
# VALIDATION FUNCTIONS
# =============================================================================
def load_report(out_dir: Path) -> Dict[str, Any]:
    return json.loads((out_dir / "report.json").read_text(encoding="utf-8"))


def read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def validate_verdicts(report: Dict[str, Any]) -> Tuple[bool, str]:
    """Every verdict names its bound and cites value, threshold, margin."""
    for v in report.get("verdicts", []):
        for field in ("name", "bound", "value", "threshold", "margin", "holds"):
            if field not in v:
                return False, f"Verdict missing field: {field}"
    return True, "Verdicts well formed"


def check_ideal(out_dir: Path) -> Tuple[bool, str]:
    report = load_report(out_dir)
    c = report["correlators"]
    if not (close(c["chi"], 6, 1e-9) and close(c["s"], 12, 1e-9)):
        return False, f"Expected chi=6, S=12, got {c['chi']}, {c['s']}"
    if not close(c["omega"], 18, 1e-9):
        return False, f"Expected omega=18, got {c['omega']}"
    rows = [r for r in read_csv(out_dir / "terms.csv") if r["source"] == "exact"]
    kinds = [r["kind"] for r in rows]
    if kinds.count("chi") != 6 or kinds.count("s") != 12:
        return False, "terms.csv must have 6 chi rows and 12 S rows"
    if not all(v["holds"] for v in report["verdicts"]):
        return False, "Ideal state must violate both bounds"
    return validate_verdicts(report)


def check_bound(expected: int, reproduced: bool) -> Callable[[Path], Tuple[bool, str]]:
    def check(out_dir: Path) -> Tuple[bool, str]:
        report = load_report(out_dir)
        b = report["bounds"][0]
        if b["maximum"] != expected:
            return False, f"Expected maximum {expected}, got {b['maximum']}"
        if b["bound_reproduced"] != reproduced:
            return False, f"bound_reproduced should be {reproduced}"
        if b["witness_value"] != b["maximum"]:
            return False, "Witness does not reproduce the maximum"
        logger.log(
            f"  max {b['maximum']}, {b['maximizer_count']} maximizers, "
            f"sweep size {b['sweep_size']}"
        )
        return validate_verdicts(report)

    return check


def check_calibration(out_dir: Path) -> Tuple[bool, str]:
    cal = load_report(out_dir)["calibration"]
    if not cal["feasible"]:
        return False, f"Calibration infeasible: {cal}"
    if not close(cal["omega"], 17.247, 0.03):
        return False, f"omega {cal['omega']} not within 0.03 of 17.247"
    logger.log(
        f"  eta={cal['model']['per_measurement_visibility']:.5f}, "
        f"phi={cal['model']['prep_phase_error']:.4f}"
    )
    return True, "Calibration reproduces the measured values"


def check_significance(out_dir: Path) -> Tuple[bool, str]:
    sig = load_report(out_dir)["significance"][0]
    if not 65.5 <= sig["sigma"] < 66.0 or sig["sigma_rounded"] != 66:
        return False, f"Unexpected significance {sig['sigma']}"
    return True, f"{sig['sigma']:.2f} standard deviations"


def check_no_signaling(out_dir: Path) -> Tuple[bool, str]:
    report = load_report(out_dir)
    if report["no_signaling"]["max_deviation"] > 1e-10:
        return False, "Exact marginals depend on the remote setting"
    if not (out_dir / "counts.csv").exists():
        return False, "counts.csv missing for sampled run"
    return True, f"max |z| = {report['sampled_no_signaling']['max_abs_z']:.3f}"


def check_sample(out_dir: Path) -> Tuple[bool, str]:
    report = load_report(out_dir)
    exact = report["correlators"]
    est = report["estimates"]
    for key in ("chi", "s", "omega"):
        e = est[key]
        if abs(e["value"] - exact[key]) > 5 * max(e["standard_error"], 1e-12):
            return False, f"{key} estimate too far from exact value"
    return True, "Estimates within 5 standard errors"


# =============================================================================
# TEST RUNNER
# =============================================================================
def run_cli(args: List[str]) -> Tuple[int, str]:
    proc = subprocess.run(
        [sys.executable, str(MAIN), *args],
        cwd=ROOT,
        capture_output=True,
        text=True,
        timeout=TIMEOUT,
    )
    return proc.returncode, proc.stdout + proc.stderr


def run_test(
    test_name: str,
    args: List[str],
    expected_exit: int,
    check: Optional[Callable[[Path], Tuple[bool, str]]] = None,
) -> Dict[str, Any]:
    """
    Runs one CLI invocation into a fresh output directory.

    Returns:
        Dict with 'passed' and 'message' keys
    """
    logger.log(f"\n{'=' * 70}", Colors.BLUE)
    logger.log(test_name, Colors.BLUE + Colors.BOLD)
    logger.log(f"{'=' * 70}", Colors.BLUE)

    result = {"passed": False, "message": ""}
    with tempfile.TemporaryDirectory() as tmp:
        out_dir = Path(tmp) / "out"
        full_args = [*args]
        if "--out" not in full_args:
            full_args += ["--out", str(out_dir)]
        logger.log(f"Args: {' '.join(full_args)}")

        try:
            start = time.time()
            code, output = run_cli(full_args)
            logger.log(f"Elapsed: {time.time() - start:.1f}s")
        except subprocess.TimeoutExpired:
            result["message"] = f"Timed out after {TIMEOUT}s"
            logger.log(f"❌ {result['message']}", Colors.RED)
            return result

        if code != expected_exit:
            result["message"] = (
                f"Expected exit {expected_exit}, got {code}. Output: {output[-400:]}"
            )
            logger.log(f"❌ {result['message']}", Colors.RED)
            return result

        if check is not None:
            try:
                ok, message = check(out_dir)
            except Exception as e:
                ok, message = False, f"Unexpected error: {e}"
            if not ok:
                result["message"] = message
                logger.log(f"❌ {message}", Colors.RED)
                return result
            logger.log(f"✅ {message}")

    result["passed"] = True
    result["message"] = "Test passed successfully"
    logger.log(f"✅ {result['message']}", Colors.GREEN)
    return result


def run_determinism_test() -> Dict[str, Any]:
    """Two identical runs must give byte-identical report.json."""
    name = "Determinism: identical runs give identical report.json"
    logger.log(f"\n{'=' * 70}", Colors.BLUE)
    logger.log(name, Colors.BLUE + Colors.BOLD)
    logger.log(f"{'=' * 70}", Colors.BLUE)
    result = {"passed": False, "message": ""}
    with tempfile.TemporaryDirectory() as tmp:
        payloads = []
        for _ in range(2):
            out_dir = Path(tmp) / "out"
            args = ["sample", "--shots", "20000", "--seed", "11", "--out", str(out_dir)]
            code, output = run_cli(args)
            if code != 0:
                result["message"] = f"Run failed: {output[-400:]}"
                logger.log(f"❌ {result['message']}", Colors.RED)
                return result
            payloads.append((out_dir / "report.json").read_bytes())
        if payloads[0] != payloads[1]:
            result["message"] = "report.json differs between runs"
            logger.log(f"❌ {result['message']}", Colors.RED)
            return result
    result["passed"] = True
    result["message"] = "Byte-identical"
    logger.log(f"✅ {result['message']}", Colors.GREEN)
    return result


# =============================================================================
# MAIN EXECUTION
# =============================================================================
def main():
    logger.log(f"{'=' * 70}", Colors.BOLD)
    logger.log("CONTEXTUALITY-NONLOCALITY SIMULATOR ACCEPTANCE", Colors.BOLD + Colors.BLUE)
    logger.log(f"{'=' * 70}", Colors.BOLD)

    test_cases = [
        ("Ideal quantum values", ["simulate", "--assert"], 0, check_ideal),
        ("NCHV sweep", ["bounds", "--model", "nchv", "--assert"], 0, check_bound(4, True)),
        (
            "Noncontextual-local sweep",
            ["bounds", "--model", "nc-local", "--assert"],
            0,
            check_bound(16, True),
        ),
        (
            "Contextual LHV sweep exceeds the printed bound",
            ["bounds", "--model", "lhv", "--sign-mode", "fixed", "--assert"],
            1,
            check_bound(18, False),
        ),
        ("Calibration", ["calibrate"], 0, check_calibration),
        (
            "Significance arithmetic",
            ["significance", "--value", "17.247", "--se", "0.019", "--bound", "16"],
            0,
            check_significance,
        ),
        (
            "Sampled estimates",
            ["sample", "--calibrated", "--shots", "1000000", "--seed", "3"],
            0,
            check_sample,
        ),
        (
            "No-signaling",
            ["nosignal", "--calibrated", "--shots", "100000", "--seed", "5"],
            0,
            check_no_signaling,
        ),
        (
            "Invalid config (Should exit 2)",
            ["simulate", "--state-white-noise", "1.5"],
            2,
            None,
        ),
        (
            "Unwritable output (Should exit 3)",
            ["simulate", "--out", str(MAIN)],
            3,
            None,
        ),
    ]

    results = [run_test(*tc) for tc in test_cases]
    results.append(run_determinism_test())
    names = [tc[0] for tc in test_cases] + ["Determinism"]

    # ==========================================================================
    # CALCULATE FINAL RESULTS
    # ==========================================================================
    tests_passed = sum(1 for r in results if r["passed"])

    logger.log(f"\n{'=' * 70}", Colors.BOLD)
    logger.log("FINAL TEST RESULTS", Colors.BOLD + Colors.BLUE)
    logger.log(f"{'=' * 70}", Colors.BOLD)

    for name, result in zip(names, results):
        status = "✅ PASSED" if result["passed"] else "❌ FAILED"
        color = Colors.GREEN if result["passed"] else Colors.RED
        logger.log(f"{name}: {status}", color + Colors.BOLD)
        if not result["passed"]:
            logger.log(f"  Reason: {result['message']}")

    logger.log(f"\nTests Passed: {tests_passed}/{len(results)}")
    if tests_passed == len(results):
        logger.log("🎉 ALL TESTS PASSED!", Colors.GREEN + Colors.BOLD)
    else:
        logger.log("❌ SOME TESTS FAILED.", Colors.RED + Colors.BOLD)
    logger.log(f"\n{'=' * 70}")

    sys.exit(0 if tests_passed == len(results) else 1)


if __name__ == "__main__":
    main()
