"""Runs each subcommand of the cgfnt tool and validates its JSON against docs/*.schema.json.

usage: cli_schema.py <cgfnt binary> <docs dir> <scratch dir>
"""

import json
import pathlib
import random
import subprocess
import sys

import jsonschema


def run(cli, *args, expect=(0,)):
    proc = subprocess.run([cli, *args], capture_output=True, text=True)
    if proc.returncode not in expect:
        sys.exit(f"{' '.join(args)}: exit {proc.returncode}\n{proc.stderr}")
    return json.loads(proc.stdout)


def main():
    cli, docs, scratch = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    scratch.mkdir(parents=True, exist_ok=True)
    schema = {name: json.loads((docs / f"{name}.schema.json").read_text())
              for name in ("test_result", "calibrate_summary", "power_result", "verify_report")}

    rng = random.Random(7)
    multi = scratch / "schema_multi.csv"
    multi.write_text("".join(f"{rng.gauss(0, 1)},{rng.gauss(0, 1)}\n" for _ in range(30)))
    uni = scratch / "schema_uni.csv"
    uni.write_text("".join(f"{rng.expovariate(1.0)}\n" for _ in range(30)))
    flat = scratch / "schema_flat.csv"
    flat.write_text("".join(f"{v},{v}\n" for v in (rng.gauss(0, 1) for _ in range(30))))
    cal = scratch / "schema.cal"

    docs_checked = []
    docs_checked.append(("calibrate_summary", run(cli, "calibrate", "--n", "30", "--p", "2", "--S", "200",
                                                  "--N", "40", "--out", str(cal))))
    docs_checked.append(("test_result", run(cli, "test", "--input", str(multi), "--calibration", str(cal))))
    docs_checked.append(("test_result", run(cli, "test", "--input", str(flat), "--calibration", str(cal))))
    docs_checked.append(("test_result", run(cli, "test", "--input", str(uni), "--S", "200", "--N", "20")))
    docs_checked.append(("power_result", run(cli, "power", "--spec", "product:exp(1):p=2", "--n", "30",
                                             "--reps", "100", "--S", "200", "--N", "30", "--timing")))
    docs_checked.append(("power_result", run(cli, "power", "--spec", "product:uniform(0,1):p=1", "--n", "30",
                                             "--reps", "100", "--S", "200", "--N", "30")))
    docs_checked.append(("verify_report", run(cli, "verify", "--quick", "--timing", expect=(0, 1))))

    for name, doc in docs_checked:
        jsonschema.validate(doc, schema[name])
        print(f"ok {name}")


if __name__ == "__main__":
    main()
