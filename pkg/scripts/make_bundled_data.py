#!/usr/bin/env python3
"""Synthesize the bundled desk datasets (deterministic; run once, commit).

Shapes mirror the three case-study datasets: flights 168x9, graduates
136x9, vehicles 389x9, plus the tiny students table. Values are synthetic.
A sprinkle of empty cells exercises null semantics.
"""

from __future__ import annotations

import csv
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "src/datamator/resources/datasets"

COUNTRIES = ["United States", "Germany", "Japan", "Brazil", "Canada", "France", "India", "Norway"]
AIRLINES = ["Aurora Air", "BlueJet", "Cloudline", "Meridian", "Polaris", "SkyHop"]
CITIES = ["Austin", "Berlin", "Chengdu", "Denver", "Edinburgh", "Florence", "Geneva", "Hanoi"]
EMPLOYERS = ["Acme Analytics", "Borealis Labs", "Cypress Systems", "Deltaview", "Evergreen AI", "Foxglove"]
MAJORS = ["computer science", "economics", "biology", "design", "mathematics", "physics"]
LEVELS = ["Bachelor", "Master", "PhD"]
CAREERS = ["industry", "academia"]
FIRST = ["Ada", "Ben", "Cleo", "Dev", "Elif", "Finn", "Gita", "Hugo", "Iris", "Joon", "Kira", "Liam", "Mona", "Noor", "Omar", "Pia"]
LAST = ["Abe", "Blum", "Cho", "Diaz", "Endo", "Frey", "Gupta", "Holt", "Ito", "Jonas", "Khan", "Lund", "March", "Ng", "Okafor", "Petrov"]
MAKES = ["Alder", "Borealis", "Cascade", "Dune", "Ember", "Falcon", "Glacier", "Harbor"]
MODELS = ["GT", "LX", "Sport", "Tour", "City", "Max", "Eco", "Prime"]
FUELS = ["petrol", "diesel", "electric", "hybrid"]


def write_table(dirname: str, table: str, header: list[str], rows: list[list]) -> None:
    out_dir = ROOT / dirname
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{table}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"{dirname}/{table}.csv: {len(rows)} rows x {len(header)} cols")


def make_students() -> None:
    rows = [
        [1, "Amy", 2000, "CS"],
        [2, "Bob", 1999, "EE"],
        [3, "Cal", 2000, "CS"],
        [4, "Dee", 2001, "ME"],
    ]
    write_table("students", "students", ["id", "name", "birth_year", "dept"], rows)


def make_flights(rng: random.Random) -> None:
    rows = []
    for i in range(168):
        month = rng.randint(1, 12)
        day = rng.randint(1, 28)
        delay = rng.randint(-10, 180) if rng.random() > 0.03 else ""
        rows.append(
            [
                f"{rng.choice(['UA', 'BJ', 'CL', 'MD', 'PL', 'SH'])}{100 + i}",
                f"2023-{month:02d}-{day:02d}",
                rng.randint(62, 244),
                round(rng.uniform(180, 10900), 1),
                rng.choice(COUNTRIES),
                rng.choice(COUNTRIES),
                rng.choice(AIRLINES),
                delay,
                f"{rng.choice('ABCD')}{rng.randint(1, 12)}",
            ]
        )
    header = [
        "flight_number", "date", "passengers", "distance_km",
        "departure_country", "arrival_country", "airline", "delay_minutes", "gate",
    ]
    write_table("flights", "flights", header, rows)


def make_graduates(rng: random.Random) -> None:
    rows = []
    for _ in range(136):
        employer = rng.choice(EMPLOYERS) if rng.random() > 0.02 else ""
        rows.append(
            [
                f"{rng.choice(FIRST)} {rng.choice(LAST)}",
                rng.choice(LEVELS),
                employer,
                rng.randint(28, 190) * 1000 + rng.randint(0, 999),
                rng.choice(CITIES),
                rng.randint(2010, 2023),
                rng.choice(MAJORS),
                rng.choice(CAREERS),
                round(rng.uniform(2.0, 4.0), 2),
            ]
        )
    header = [
        "name", "education_level", "employer", "salary", "city",
        "graduation_year", "major", "career", "gpa",
    ]
    write_table("graduates", "graduates", header, rows)


def make_vehicles(rng: random.Random) -> None:
    rows = []
    for _ in range(389):
        mpg = round(rng.uniform(8, 60), 1) if rng.random() > 0.02 else ""
        rows.append(
            [
                f"{rng.choice(MAKES)} {rng.choice(MODELS)} {rng.randint(1, 9)}",
                rng.randint(800, 3500),
                rng.randint(45, 900),
                rng.choice(COUNTRIES),
                rng.randint(1995, 2023),
                rng.choice(FUELS),
                rng.choice([0, 3, 4, 4, 6, 6, 8, 12]),
                mpg,
                rng.randint(8000, 250000),
            ]
        )
    header = [
        "name", "weight_kg", "horsepower", "production_country",
        "production_year", "fuel", "cylinders", "mpg", "price",
    ]
    write_table("vehicles", "vehicles", header, rows)


if __name__ == "__main__":
    rng = random.Random(20230717)
    make_students()
    make_flights(rng)
    make_graduates(rng)
    make_vehicles(rng)
