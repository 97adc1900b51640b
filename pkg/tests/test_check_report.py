import pytest

from lorentz_transport.check_report import REFERENCES, CheckFailure, CheckReport


def test_failure_keeps_its_reference():
    report = CheckReport("duality")
    report.fail("potentials", "zero duality gap", (), "dual value misses the optimal cost by 0.5",
                "kantorovich-duality")
    assert not report.passed
    (failure,) = report.failures
    assert failure.reference == "kantorovich-duality"
    assert failure.to_dict()["reference"] == "kantorovich-duality"
    assert CheckReport.read_from_dict(report.to_dict()).failures == [failure]


def test_unknown_reference_is_rejected():
    report = CheckReport("map")
    with pytest.raises(ValueError):
        report.fail("transport", "plan induced by a map", (0,), "split row", "folklore")
    assert report.passed


def test_reports_without_references_still_load():
    data = {"name": "plan", "failures": [{"module": "kantorovich", "property": "optimality of the stored plan",
                                          "indices": [], "message": "fresh solve differs by 1.0"}]}
    (failure,) = CheckReport.read_from_dict(data).failures
    assert failure == CheckFailure("kantorovich", "optimality of the stored plan", (), "fresh solve differs by 1.0")
    assert failure.reference not in REFERENCES
