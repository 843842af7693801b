#!/usr/bin/env python3
"""Regenerate the bundled demo corpus under src/evchain/data/toy/.

All content is hand-authored and deterministic so the generated files are
byte-stable across runs. The corpus is constructed so that the demo exhibits
the pipeline's behavior clearly:

* every rally/album mention is annotated, giving the linker dense training
  data and the no-chainer ablation a long entry list;
* three "hard" questions name single-token entrants whose table form only
  ever appears comma-glued, so first-hop retrieval cannot see them and only
  the link + question-generation scores can surface the right passage;
* the shared filler vocabulary (touring, winter, season) pulls rally and
  album chunks above the hard questions' gold chunks in retrieval order.

Run with --check to rebuild and print pipeline diagnostics.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

OUT_DIR = REPO / "src" / "evchain" / "data" / "toy"

RALLY_YEARS = [1984, 1985, 1986, 1987, 1988]

DRIVERS = [
    "Maren", "Keldan", "Vossig", "Dunmere", "Harrow",
    "Quayle", "Bastien", "Ferrow", "Lindqvist", "Okafor",
    "Trevain", "Solberg", "Ashdown", "Veiga", "Mortlake",
    "Rybak", "Calloway", "Istvan", "Northgate", "Palomer",
    "Wrenfield", "Dorsay", "Kivela", "Amundsen", "Barrault",
]

CITIES = [
    "Sorrel Gate", "Quarry Hollow", "Fenwick Shore", "Maplestead", "Tarn Hollow",
    "Eastmoor", "Glenhaven", "Pellworth", "Windle Cross", "Ostermund",
    "Larkspur Bend", "Coldwater Flats", "Bryndale", "Harrow Point", "Seddon Vale",
    "Milbrook", "Thornlea", "Vanterre", "Kestrel Ridge", "Ormsgill",
    "Dunlow", "Averenne", "Saltmarsh End", "Yewbarrow", "Crailsmuir",
]

TEAMS = ["Vermillion", "Ironline", "Bluewater", "Granite", "Summitline"]

ORDINALS = ["first", "second", "third", "fourth", "fifth"]

NOTE_TEMPLATES = [
    "kept the touring pace steady across the gravel loops and never dropped the lead once",
    "held station through the long winter loops despite a cracked windscreen and badly worn tyres",
    "climbed back after a spin and took strong points late in the season on the descent",
    "ran wide at the water splash and lost a full minute in the reeds by the weir",
    "retired early with a broken driveshaft after leading the opening loop by a clear margin",
]

ALBUM_DETAIL = (
    "studio session recorded during a touring break with the house orchestra "
    "backing the season across four long nights"
)
BOOTLEG_DETAIL = (
    "unofficial live tape pressed in small numbers after the winter tour and "
    "sold at the door of every hall"
)

SPECIAL_REMARKS = [
    "works entry prepared by hand in a stone shed beside the harbour over two patient years of slow fitting",
    "open frame machine rebuilt twice after the spring trials on the lower coast road and painted deep green",
    "heavy sled conversion that struggled badly on packed ice and finished far behind the rest of the field",
    "light chassis entry that cracked a beam before the finish and was pushed home by its own crew",
]


def build_corpus():
    passages = []
    tables = []
    link_specs: dict[str, list[tuple[int, str, str]]] = {}

    # ---- 5 rally tables, 5 rows each, every driver linked ----
    driver_idx = 0
    for year in RALLY_YEARS:
        table_id = f"t_rally_{year}"
        rows = []
        for pos in range(5):
            name = DRIVERS[driver_idx]
            city = CITIES[driver_idx]
            team = TEAMS[(driver_idx + pos) % len(TEAMS)]
            note = NOTE_TEMPLATES[pos]
            rows.append([str(pos + 1), name, team, note])
            pid = f"p_driver_{name.lower()}"
            passages.append(
                {
                    "id": pid,
                    "title": name,
                    "text": (
                        f"{name} drove for {team} at the Cascade Rally {year} and finished "
                        f"{ORDINALS[pos]}. {name}, born in {city}, learned on the lanes near "
                        f"{city}. Later {name}, retired, ran the {city} garage."
                    ),
                }
            )
            link_specs.setdefault(table_id, []).append((pos, name, pid))
            driver_idx += 1
        tables.append(
            {
                "id": table_id,
                "title": f"Cascade Rally {year}",
                "header": ["Position", "Driver", "Team", "Notes"],
                "rows": rows,
            }
        )

    # ---- 2 "special" tables holding the hard questions' single-token pilots ----
    # Pilot names sit in a middle column, so the flattened chunks only contain
    # the comma-glued form; questions and passages carry the clean form. The
    # remarks deliberately avoid the touring/winter/season filler words.
    hard_pilots = {
        "t_hillclimb": ("Harlow Hillclimb Trials", [("Norqa", "Bryndale Heights"), ("Vexel", "Copper Shallows")]),
        "t_icerun": ("Torvik Ice Run Standings", [("Zerren", "Lowsand Quay")]),
    }
    filler_entrants = ["Mossvane", "Tarwick", "Umbell", "Skarne", "Fenwit"]
    filler_i = 0
    for table_id, (title, pilots) in hard_pilots.items():
        rows = []
        order = 1
        for pilot, city in pilots:
            rows.append([str(order), pilot, f"{pilot} Mark {order}", SPECIAL_REMARKS[0]])
            pid = f"p_pilot_{pilot.lower()}"
            passages.append(
                {
                    "id": pid,
                    "title": pilot,
                    "text": (
                        f"{pilot} was the touring champion of the winter season. "
                        f"{pilot}, born in {city}, built hillclimb machines in a small shop. "
                        f"Each winter season {pilot}, always the touring champion, worked from {city}."
                    ),
                }
            )
            link_specs.setdefault(table_id, []).append((order - 1, pilot, pid))
            order += 1
        for _ in range(2):
            rows.append(
                [str(order), filler_entrants[filler_i], f"{filler_entrants[filler_i]} Mark {order}",
                 SPECIAL_REMARKS[1 + (filler_i % 3)]]
            )
            filler_i += 1
            order += 1
        tables.append(
            {
                "id": table_id,
                "title": title,
                "header": ["Order", "Entrant", "Machine", "Remarks"],
                "rows": rows,
            }
        )

    # ---- 4 album tables with two linked records each ----
    bands = ["Lanterns", "Vespera", "Goldline", "Reedfall"]
    albums = [
        ("Harborlight", "Odell Marsh"), ("Nightferry", "Imre Callas"),
        ("Paperstorm", "Lena Vint"), ("Quietengine", "Tomas Brill"),
        ("Saltorchard", "Rilla Downs"), ("Copperveins", "Aldo Strand"),
        ("Amberarcade", "Greta Hale"), ("Lanternmile", "Piet Rosler"),
    ]
    labels = ["Meridian", "Housefire", "Cedarnote", "Arclight"]
    album_i = 0
    for band_i, band in enumerate(bands):
        table_id = f"t_albums_{band_i}"
        rows = []
        for slot in range(4):
            year = str(1991 + slot)
            if slot < 2:
                album, producer = albums[album_i]
                label = labels[(band_i + slot) % len(labels)]
                rows.append([year, album, label, ALBUM_DETAIL])
                pid = f"p_album_{album.lower()}"
                passages.append(
                    {
                        "id": pid,
                        "title": album,
                        "text": (
                            f"{album} is a studio album by the band {band}. The producer "
                            f"{producer} shaped {album}, layering tape loops under the songs. "
                            f"{label} pressed {album}, and the first run sold out."
                        ),
                    }
                )
                link_specs.setdefault(table_id, []).append((slot, album, pid))
                album_i += 1
            else:
                rows.append([year, f"Bootleg Sessions {slot}", labels[(band_i + slot) % len(labels)],
                             BOOTLEG_DETAIL])
        tables.append(
            {
                "id": table_id,
                "title": f"Selected Albums of {band}",
                "header": ["Year", "Album", "Label", "Details"],
                "rows": rows,
            }
        )

    # ---- 1 expedition table with one linked leader ----
    exp_rows = [
        ["1931", "Stene", "Norway",
         "reached the icefall camp before the weather closed the route entirely and came down with nothing to show"],
        ["1935", "Calder", "Wales",
         "mapped the eastern ridge line in full and returned with complete survey notebooks after a hungry month"],
        ["1948", "Malek", "Poland",
         "turned back at the high col after losing two supply sleds in a storm on the fourth night out"],
        ["1953", "Varga", "Hungary",
         "made the summit by the north spur in one long push from the last camp and returned before dark"],
    ]
    tables.append(
        {
            "id": "t_expedition",
            "title": "Mount Veyra Expeditions",
            "header": ["Year", "Leader", "Country", "Outcome"],
            "rows": exp_rows,
        }
    )
    passages.append(
        {
            "id": "p_leader_varga",
            "title": "Varga",
            "text": (
                "Varga led the 1953 climb of Mount Veyra by the north spur. "
                "Varga, born in Kalovec, trained on sandstone near Kalovec. "
                "At the summit Varga, alone, fixed the final ropes."
            ),
        }
    )
    link_specs.setdefault("t_expedition", []).append((3, "Varga", "p_leader_varga"))

    # ---- distractor passages, vocabulary far from every question ----
    distractors = [
        ("p_dx_lighthouse", "Meridian Lighthouse",
         "The Meridian Lighthouse guards the shoal east of the river mouth and burns a revolving lamp of pressed oil."),
        ("p_dx_bridge", "Old Span Bridge",
         "The Old Span Bridge carries the canal towpath over the weir and floods whenever the sluice gates jam."),
        ("p_dx_observatory", "Hollow Peak Observatory",
         "Hollow Peak Observatory measures the night sky with a brass refractor older than the village below it."),
    ]
    for pid, title, text in distractors:
        passages.append({"id": pid, "title": title, "text": text})

    return passages, tables, link_specs


def build_questions():
    """(qid, question, answers, gold table, linked row or None for single-hop)."""
    return [
        # hard multi-hop: entity visible only through the link
        ("q_hard_norqa",
         "Which city was the touring champion Norqa born in during the winter season?",
         ["Bryndale Heights"], "t_hillclimb", 0),
        ("q_hard_vexel",
         "Which city was the winter season touring champion Vexel born in?",
         ["Copper Shallows"], "t_hillclimb", 1),
        ("q_hard_zerren",
         "Which city was the touring champion Zerren born in after the winter season?",
         ["Lowsand Quay"], "t_icerun", 0),
        # medium multi-hop: table found lexically, answer in the linked passage
        ("q_rally_1987",
         "Which city was the driver who finished second at the Cascade Rally 1987 born in?",
         ["Kestrel Ridge"], "t_rally_1987", 1),
        ("q_rally_1985",
         "Which city was the driver who finished fourth at the Cascade Rally 1985 born in?",
         ["Windle Cross"], "t_rally_1985", 3),
        ("q_rally_1988",
         "Which city was the driver who finished first at the Cascade Rally 1988 born in?",
         ["Dunlow"], "t_rally_1988", 0),
        ("q_album",
         "Which producer shaped the studio album Harborlight by the band Lanterns?",
         ["Odell Marsh"], "t_albums_0", 0),
        ("q_expedition",
         "Which city was the leader of the Mount Veyra summit climb born in?",
         ["Kalovec"], "t_expedition", 3),
        # single-hop: the answer is a table cell
        ("q_single_team",
         "Which team did the winner drive for at the Cascade Rally 1984?",
         ["Vermillion"], "t_rally_1984", None),
        ("q_single_label",
         "Which label pressed the album Nightferry for the band Lanterns?",
         ["Housefire"], "t_albums_0", None),
    ]


def resolve_gold(tables, link_specs):
    """Chunk-level spans for every annotated link, via the real chunker."""
    from evchain.corpus import Table, chunk_table

    chunks_of_table = {}
    for trec in tables:
        t = Table(trec["id"], trec["title"], list(trec["header"]), [list(r) for r in trec["rows"]])
        chunks_of_table[t.id] = chunk_table(t, 100)

    links = {}
    for table_id, entries in link_specs.items():
        for row, _surface, pid in entries:
            found = None
            for chunk in chunks_of_table[table_id]:
                for span in chunk.cell_map:
                    if span.row == row and span.col == 1:
                        found = {"chunk_id": chunk.chunk_id, "start": span.start,
                                 "end": span.end - 1, "passage_id": pid}
            if found is None:
                raise LookupError(f"{table_id} row {row} not found in any chunk")
            links[(table_id, row)] = found
    return chunks_of_table, links


def assemble_gold(tables, link_specs):
    chunks_of_table, links = resolve_gold(tables, link_specs)
    records = []
    for qid, question, answers, table_id, row in build_questions():
        if row is None:
            gold_chunks = [chunks_of_table[table_id][0].chunk_id]
            gold_links = []
        else:
            link = links[(table_id, row)]
            gold_chunks = [link["chunk_id"]]
            gold_links = [link]
        records.append(
            {"qid": qid, "question": question, "answers": answers,
             "gold_chunks": gold_chunks, "gold_links": gold_links}
        )
    questioned = {(l["chunk_id"], l["start"], l["passage_id"])
                  for rec in records for l in rec["gold_links"]}
    inventory = [link for key, link in sorted(links.items())
                 if (link["chunk_id"], link["start"], link["passage_id"]) not in questioned]
    if inventory:
        # question-less record: trains and evaluates the linker only
        records.append({"qid": "link_inventory", "question": "", "answers": [],
                        "gold_chunks": [], "gold_links": inventory})
    return records


def write_jsonl(path: Path, records) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--check", action="store_true", help="print pipeline diagnostics")
    parser.add_argument("--out", default=str(OUT_DIR))
    args = parser.parse_args()

    passages, tables, link_specs = build_corpus()
    gold = assemble_gold(tables, link_specs)

    out = Path(args.out)
    write_jsonl(out / "passages.jsonl", passages)
    write_jsonl(out / "tables.jsonl", tables)
    write_jsonl(out / "gold.jsonl", gold)
    print(f"wrote {len(passages)} passages, {len(tables)} tables, {len(gold)} gold records -> {out}")

    if args.check:
        from toy_diagnostics import run_diagnostics
        run_diagnostics(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
