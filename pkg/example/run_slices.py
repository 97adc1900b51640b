import logging

from lorentz_transport import RunConfig, Pipeline


def stage_completed(stage: str, payload):
    print(f"Finished stage {stage}")


def check_failed(report):
    print(f"Check {report.name} failed: {[f.message for f in report.failures]}")


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    config = RunConfig(seed=7, dimension=1, sizes=(20, 20), profile="slices", out_dir="run-slices")
    pipeline = Pipeline(config)
    pipeline.on_stage_completed_event.handlers.append(stage_completed)
    pipeline.on_check_failed_event.handlers.append(check_failed)

    result = pipeline.run()
    values = result.summary["values"]
    print(f"Exit code {result.exit_code}: optimal cost {values['total_cost']:.12g}, "
          f"duality gap {values['duality_gap']:.3g}, delta {values['delta']:.6g}")
