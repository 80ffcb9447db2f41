"""Write the bundled scenario documents to scenarios/."""
import json
from pathlib import Path

from resilient_optsim import scenario

out = Path(__file__).resolve().parent.parent / "scenarios"
out.mkdir(exist_ok=True)
docs = {
    "robot_team.json": scenario.robot_team_dict(attacks=True),
    "robot_team_no_attack.json": scenario.robot_team_dict(attacks=False),
    "two_integrators.json": scenario.two_integrators_dict(),
}
for name, doc in docs.items():
    (out / name).write_text(json.dumps(doc, indent=2) + "\n")
    print(out / name)
