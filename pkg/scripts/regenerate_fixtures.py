"""Rewrite the shipped conformance vectors and check them.

Only needed when a case is added; expected values come from the loop oracles.
"""

from sensorattn import verify


def main():
    target = verify.export_fixtures(verify.FIXTURE_ROOT)
    results = verify.run_conformance(verify.FIXTURE_ROOT)
    bad = [r for r in results if not r.passed]
    for r in bad:
        print(r.line())
    print(f"{len(results)} cases in {target}, {len(bad)} failing")
    raise SystemExit(1 if bad else 0)


if __name__ == "__main__":
    main()
