"""Regenerate the built-in case files in ``src/ccrm/data``.

The case narratives give roles, relations and outcomes but no edge lists
or trust values. This script is the single place where those narratives
are turned into networks; every numeric choice below is an interpretation
and is marked as such in each file's metadata.

Run from the repository root::

    python scripts/generate_builtin_cases.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parents[1] / "src" / "ccrm" / "data"
S = "sample"


def agent(id_, role, social="neutral", capitals=S, note=None):
    d = {"id": id_, "business_role": role, "social_role": social, "capitals": capitals}
    if note:
        d["note"] = note
    return d


def caps(criminal, violence, financial):
    return {"criminal": criminal, "violence": violence, "financial": financial}


def edge(i, j, tag, trust=S):
    return {"i": i, "j": j, "social_tag": tag, "trust": trust}


def stmt(id_, max_, predicate, description):
    return {"id": id_, "max": max_, "predicate": predicate, "description": description}


def monotone(mode=None):
    p = ["monotone_high_trust", 0.8, "removal", ["removal", 1]]
    return p + [mode] if mode else p


def doc(id_, title, agents, edges, target, step, statements, metadata):
    return {
        "schema": "ccrm-scenario/1",
        "id": id_,
        "title": title,
        "agents": agents,
        "edges": edges,
        "intervention": {"target": target, "step": step},
        "horizon": 365,
        "statements": statements,
        "metadata": {"interpretation": True, **metadata},
    }


def case_a():
    agents = [
        agent("Main", "kingpin", note="leader of the group, liquidated"),
        agent("A", "organizer", "family", caps([0.0, 0.2], [0.0, 0.2], [0.0, 0.2]),
              "brother; takes over although his capitals are low"),
        agent("B", "organizer", "family", caps([0.1, 0.4], [0.1, 0.4], [0.1, 0.4]), "brother"),
        agent("C", "exporter", "family", note="cousin, sent abroad to keep supply lines"),
        agent("D", "financer", "friend", caps(0.8, 0.0, 0.9), "financial man, flees abroad"),
        agent("E", "stasher", "friend", note="childhood friend, goes into hiding"),
        agent("F", "producer", "neutral", note="large independent player, keeps a low profile"),
        agent("G", "distributor", "neutral", note="dependent on the leader, leaves the milieu"),
    ]
    edges = [
        edge("Main", "A", "family"), edge("Main", "B", "family"), edge("Main", "C", "family"),
        edge("Main", "D", "friend"), edge("Main", "E", "friend"),
        edge("Main", "F", "neutral", 0.3), edge("Main", "G", "neutral", 0.35),
        edge("A", "B", "family", 0.9), edge("A", "C", "family"), edge("B", "C", "family"),
        edge("A", "E", "friend"), edge("B", "E", "friend"),
        edge("A", "F", "neutral", 0.4),
        edge("A", "G", "neutral", 0.08), edge("B", "G", "neutral", 0.06),
    ]
    statements = {"training": [
        stmt("A.I", 1, ["holds_role", "A", "kingpin", "end"],
             "correct successor holds the kingpin role at the end"),
        stmt("A.II", 1, ["holds_role", "A", "kingpin", "instatement"],
             "correct successor is the first one instated"),
        stmt("A.III", 1, ["absent", "G", "end"], "G has left the network at the end"),
        stmt("A.IV", 1, ["trust_top", "A", ["B", "C"], "end"], "A's two most trusted ties are B and C"),
        stmt("A.V", 1, monotone(), "edges above 0.8 do not lose trust on the day after the removal"),
        stmt("A.VI", 1, ["aggregate_delta", "orphans", "violence", "removal", ["removal", 7], ">", 0],
             "mean violence capital of the orphans is higher one week after the removal"),
        stmt("A.VII", 1, ["aggregate_delta", "orphans", "pairwise_trust", "removal", "end", ">", 0],
             "mean trust among orphans is higher at the end than at the removal"),
        stmt("A.VIII", 1, ["or", ["changed", "mean_abs_trust_change", "init", "end", 0.1],
                           ["changed", "degree_l1", "init", "end", 0.1]],
             "trust or connectivity among non-kingpin agents changes by at least 0.1"),
    ]}
    meta = {
        "time": "removal at day 60 so trust can settle first; one year in total",
        "agents": "leader, two brothers, cousin, financial man, two friends, one dependent dealer",
        "behaviour": "a brother succeeds almost immediately; the financial man flees; one friend hides",
        "rules": "succession by the brother is possible only with lenient capital thresholds",
        "topology": "family core around the leader; independent player tied to the leader and A",
        "ties": "family among leader, brothers and cousin; friendships; weak neutral ties of G",
    }
    return doc("A", "Liquidation of a top criminal", agents, edges, "Main", 60, statements, meta)


def case_b():
    agents = [
        agent("X", "kingpin", note="iconic criminal, liquidated"),
        agent("Y", "coordinator", "friend", caps([0.7, 0.9], [0.4, 0.6], [0.0, 0.2]),
              "old confidant, tries to take over"),
        agent("A", "organizer", "friend", caps([0.6, 0.8], [0.3, 0.5], [0.3, 0.5]),
              "access to large consignments"),
        agent("B", "coordinator", "friend", caps([0.6, 0.8], [0.3, 0.5], [0.3, 0.5]),
              "infrastructure and sales market"),
        agent("C", "assassin", "friend", caps([0.4, 0.6], [0.8, 1.0], [0.1, 0.3]),
              "potential for violence"),
        agent("D", "financer", "family", note="family member of X"),
        agent("E", "broker", "friend", note="childhood friend of X"),
    ]
    edges = [
        edge("X", "Y", "friend"), edge("X", "A", "friend"), edge("X", "B", "friend"),
        edge("X", "C", "friend"), edge("X", "D", "family"), edge("X", "E", "friend"),
        edge("A", "B", "friend", 0.85), edge("A", "C", "friend", 0.88), edge("B", "C", "friend", 0.86),
        edge("Y", "A", "friend", 0.78), edge("Y", "E", "friend"),
        edge("Y", "B", "neutral", 0.5), edge("Y", "C", "neutral", 0.5), edge("Y", "D", "neutral", 0.5),
        edge("A", "D", "neutral", 0.5), edge("A", "E", "neutral", 0.5),
        edge("B", "D", "neutral", 0.5), edge("B", "E", "neutral", 0.5),
        edge("C", "D", "neutral", 0.5), edge("C", "E", "neutral", 0.5),
        edge("D", "E", "neutral"),
    ]
    third = "1/3"
    statements = {"training": [
        stmt("B.I", 1, ["parts", ["unimplemented", "triumvirate of A"],
                        ["unimplemented", "triumvirate of B"], ["unimplemented", "triumvirate of C"]],
             "A, B and C jointly take over (three thirds); joint leadership is not simulated"),
        stmt("B.II", 1, ["first_selected", "Y"], "Y is the first one selected"),
        stmt("B.III", 1, ["aggregate_delta", "orphans", "pairwise_trust", "removal", ["removal", 364], ">", 0],
             "mean trust among orphans is higher 364 days after the removal"),
        stmt("B.IV", 1, ["absent", "Y", "end"], "Y has left the network at the end"),
        stmt("B.V", third, ["trust_top", "A", ["B", "C"], "end"], "A trusts B and C most"),
        stmt("B.VI", third, ["trust_top", "B", ["A", "C"], "end"], "B trusts A and C most"),
        stmt("B.VII", third, ["trust_top", "C", ["A", "B"], "end"], "C trusts A and B most"),
        stmt("B.VIII", 1, monotone(), "edges above 0.8 do not lose trust on the day after the removal"),
    ]}
    meta = {
        "time": "removal at day 0; one year",
        "agents": "cluster of six around X plus a family member",
        "behaviour": "Y tries to take over but cannot; A, B and C end up running things together",
        "rules": "three candidates of equal standing; Y has lower capitals",
        "topology": "dense triangle A-B-C, everyone tied to X",
        "ties": "friendships to X, family tie of D, strong trust inside the triangle",
    }
    return doc("B", "Liquidation of an iconic criminal", agents, edges, "X", 0, statements, meta)


def case_c():
    agents = [
        agent("X", "kingpin", note="leader, liquidated by surprise"),
        agent("A", "organizer", "family", caps(0.2, 0.2, 0.2), "brother, core of the network"),
        agent("B", "broker", "friend", note="representative of the local group"),
        agent("C", "financer", "family", note="relative, few connections"),
        agent("Y", "coordinator", "neutral", caps([0.95, 1.0], [0.2, 0.6], [0.95, 1.0]),
              "immediately assumes leadership; holds the supplier contacts"),
        agent("H1", "organizer", "neutral", caps(0.2, 0.2, 0.2), "contact linking A to Y"),
        agent("H2", "coordinator", "neutral", caps(0.2, 0.2, 0.2), "contact linking A to a rival"),
        agent("W", "coordinator", "neutral", caps(1.0, 1.0, 1.0), "leader of a rival supply party"),
    ]
    edges = [
        edge("X", "A", "family"), edge("X", "B", "friend"), edge("X", "C", "family"),
        edge("X", "Y", "neutral", 0.45),
        edge("A", "B", "friend", 0.5), edge("A", "C", "family", 0.55), edge("B", "C", "friend", 0.5),
        edge("A", "H1", "neutral", [0.45, 0.6]), edge("H1", "Y", "friend", 0.95),
        edge("A", "H2", "neutral", [0.3, 0.45]), edge("H2", "W", "friend", 0.95),
        edge("Y", "B", "friend", 0.95),
    ]
    statements = {"training": [
        stmt("C.I", 1, ["holds_role", "Y", "kingpin", "end"], "Y holds the kingpin role at the end"),
        stmt("C.II", 1, ["holds_role", "Y", "kingpin", "instatement"], "Y is the first one instated"),
        stmt("C.III", 1, ["trust_top", "Y", ["A", "B"], "end"], "Y trusts A and B most"),
        stmt("C.IV", 1, monotone(), "edges above 0.8 do not lose trust on the day after the removal"),
        stmt("C.V", 1, ["aggregate_delta", "orphans", "pairwise_trust", "removal", "instatement", "ratio>=", 1.15],
             "trust among orphans grows by 15% before the successor is instated"),
        stmt("C.VI", 1, ["aggregate", "family_edges", "mean_trust", "end", ">=", 0.75],
             "family ties average at least 0.75 at the end"),
    ]}
    meta = {
        "time": "removal at day 0; one year",
        "agents": "leader, brother, local representative, relative, leader-in-waiting, two contacts, rival",
        "behaviour": "Y takes over at once; the others depend on him",
        "rules": "Y is found only through the contact the brother trusts moderately",
        "topology": "small ingroup; Y reached through a supplier contact",
        "ties": "family around the brother, friendships to the local group",
    }
    return doc("C", "Liquidation of an image-maker", agents, edges, "X", 0, statements, meta)


PERIPHERAL_ROLES = ["transporter", "cutter", "driver", "placer-inland", "stasher", "frontman",
                    "retriever", "distributor", "exporter", "customs-officer", "gatekeeper", "producer"]


def case_d(seed=20240601, n_peripheral=200):
    rng = np.random.default_rng(seed)
    agents = [
        agent("X", "murderbroker", note="assassination broker, arrested"),
        agent("P", "kingpin", note="head of the powerful group X works for"),
        agent("Y", "assassin", "friend", caps(0.4, 0.95, 0.4), "becomes the main hitman broker"),
        agent("Z", "assassin", "friend", caps(0.3, 0.9, 0.3), "second hitman"),
        agent("A", "broker", "friend", note="refuses to work under Y"),
        agent("B", "coordinator", "friend", caps(0.5, 0.3, 0.3), "aligns with Y"),
        agent("C", "coordinator", "friend", caps(0.5, 0.35, 0.3), "aligns with Y"),
    ]
    edges = [
        edge("X", "P", "neutral", 0.45), edge("X", "Y", "friend"), edge("X", "Z", "friend"),
        edge("X", "A", "friend"), edge("X", "B", "friend"), edge("X", "C", "friend"),
        edge("Y", "B", "friend", 0.85), edge("Y", "C", "friend", 0.8), edge("Y", "Z", "friend", 0.6),
        edge("Z", "B", "neutral", 0.3), edge("B", "C", "friend", 0.5),
        edge("P", "B", "neutral", 0.4), edge("P", "C", "neutral", 0.4),
    ]
    names = [f"N{k:03d}" for k in range(n_peripheral)]
    for name in names:
        agents.append(agent(name, str(rng.choice(PERIPHERAL_ROLES))))
    hubs = {"P": 12, "X": 6, "B": 4, "C": 4, "Z": 2}
    pairs = set()
    for hub, count in hubs.items():
        for k in rng.choice(n_peripheral, size=count, replace=False):
            pairs.add((hub, names[k]))
    for k, name in enumerate(names):
        for j in rng.choice(n_peripheral, size=int(rng.integers(1, 3)), replace=False):
            if j != k:
                pairs.add(tuple(sorted((name, names[j]))))
    for i, j in sorted(pairs):
        tag = "friend" if rng.random() < 0.2 else "neutral"
        trust = round(float(rng.uniform(0.15, 0.5)), 3) if tag == "neutral" else S
        edges.append(edge(i, j, tag, trust))
    statements = {"validation": [
        stmt("D.I", 1, ["holds_role", "Y", "murderbroker", "end"], "Y is the murderbroker at the end"),
        stmt("D.II", 1, ["holds_role", "Y", "murderbroker", ["instatement", 30]],
             "Y is the murderbroker one month after the instatement"),
        stmt("D.III", "1/2", ["trust_top", "Y", ["B", "C"], "end"], "Y trusts B and C most at the end"),
        stmt("D.IV", "1/2", ["trust_top", "Z", ["Y"], "end"], "Z trusts Y most at the end"),
        stmt("D.V", 1, monotone("proportional"),
             "edges above 0.8 do not lose trust on the day after the removal, partial credit"),
        stmt("D.VI", 1, ["absent", "A", "end"], "A has left the network at the end"),
    ]}
    meta = {
        "time": "arrest at day 0; one year",
        "agents": "murderbroker, the group head, two hitmen, three associates, 200 peripheral members",
        "behaviour": "two hitmen take over violence jobs; one associate refuses to follow Y",
        "rules": "replacement of a specialist rather than the leader",
        "topology": f"large sparse network generated with seed {seed}",
        "ties": "friendships and neutral business ties only, no family ties",
    }
    return doc("D", "Arrest of a specialist (murderbroker)", agents, edges, "X", 0, statements, meta)


def synthetic():
    """Machine-generated example used only as a parser fixture."""
    agents = [
        agent("K", "kingpin"),
        agent("S1", "organizer", "family"),
        agent("S2", "coordinator", "friend"),
        agent("S3", "broker", "friend"),
        agent("S4", "transporter", "neutral", caps(0.1, 0.2, [0.0, 0.1])),
    ]
    edges = [
        edge("K", "S1", "family"), edge("K", "S2", "friend"), edge("K", "S3", "friend", 0.6),
        edge("S1", "S2", "friend"), edge("S2", "S4", "neutral", 0.25), edge("S3", "S4", "neutral"),
    ]
    statements = {"training": [
        stmt("S.I", 1, ["holds_role", "S1", "kingpin", "end"], "the family member takes over"),
        stmt("S.II", 1, monotone(), "edges above 0.8 do not lose trust on the day after the removal"),
    ]}
    meta = {s: "generated" for s in ("time", "agents", "behaviour", "rules", "topology", "ties")}
    d = doc("synthetic", "Generated example", agents, edges, "K", 5, statements, meta)
    d["metadata"]["generated"] = True
    return d


def write(d, name):
    text = json.dumps(d, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    (DATA / name).write_text(text, encoding="utf-8")


def main():
    for d in (case_a(), case_b(), case_c(), case_d()):
        write(d, f"case_{d['id']}.json")
    write(synthetic(), "synthetic_example.json")


if __name__ == "__main__":
    main()
