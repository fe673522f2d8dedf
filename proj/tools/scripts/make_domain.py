#!/usr/bin/env python3
"""Generate the bundled restaurant domain file (data/cambridge_restaurants.json)."""
import json
import random
import sys

FOODS = [
    "african", "asian oriental", "british", "chinese", "european", "french",
    "gastropub", "indian", "international", "italian", "japanese", "korean",
    "lebanese", "mediterranean", "mexican", "modern european", "north american",
    "portuguese", "seafood", "spanish", "thai", "turkish", "vietnamese",
    "fusion", "greek", "persian", "polish", "scandinavian", "swiss",
    "caribbean", "steakhouse",
]
AREAS = ["centre", "north", "south", "east", "west"]
PRICES = ["cheap", "moderate", "expensive"]

FIXED = [
    ("Hotel du Vin and Bistro", "european", "centre", "expensive",
     "01223 227330", "15-19 Trumpington Street", "C.B 2, 1 Q.A"),
    ("Frankie and Benny's", "italian", "south", "expensive",
     "01223 412430", "Clifton Way", "C.B 1, 7 D.Y"),
    ("Gourmet Burger Kitchen", "north american", "south", "expensive",
     "01223 312598", "Regent Street", "C.B 2, 1 A.B"),
]

ADJ = ["Golden", "Red", "Blue", "Old", "Little", "Royal", "Green", "Silver",
       "Happy", "Lucky", "River", "Garden", "Corner", "Market", "Bridge",
       "Oak", "Maple", "Willow", "Crown", "Star"]
NOUN = ["House", "Kitchen", "Table", "Bistro", "Grill", "Cafe", "Lantern",
        "Terrace", "Spoon", "Plate", "Oven", "Tavern", "Room", "Court"]
STREETS = ["Regent Street", "Mill Road", "Hills Road", "King Street",
           "Bridge Street", "Castle Hill", "Newmarket Road", "Chesterton Road",
           "Trumpington Street", "Market Square", "Jesus Lane", "Green Street"]


def main(out_path: str) -> None:
    rng = random.Random(20160613)
    names = set(v[0] for v in FIXED)
    venues = [dict(zip(["name", "food", "area", "pricerange", "phone", "addr",
                        "postcode"], v)) for v in FIXED]
    foods = FOODS * 5
    rng.shuffle(foods)
    i = 0
    while len(venues) < 150:
        name = f"The {rng.choice(ADJ)} {rng.choice(NOUN)}"
        if name in names:
            name = f"{name} {rng.choice(['Two', 'East', 'West', 'Express'])}"
        if name in names:
            continue
        names.add(name)
        venues.append({
            "name": name,
            "food": foods[i % len(foods)],
            "area": rng.choice(AREAS),
            "pricerange": rng.choice(PRICES),
            "phone": f"01223 {rng.randint(100000, 999999)}",
            "addr": f"{rng.randint(1, 120)} {rng.choice(STREETS)}",
            "postcode": f"C.B {rng.randint(1, 5)}, {rng.randint(1, 9)} "
                        f"{rng.choice('ABDEFHJLNPQRSTUWXYZ')}.{rng.choice('ABDEFHJLNPQRSTUWXYZ')}",
        })
        i += 1
    doc = {
        "name": "cambridge-restaurants",
        "constraint_slots": ["food", "area", "pricerange"],
        "info_slots": ["phone", "addr", "postcode"],
        "slot_values": {"food": FOODS, "area": AREAS, "pricerange": PRICES},
        "venues": venues,
    }
    with open(out_path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/cambridge_restaurants.json")
