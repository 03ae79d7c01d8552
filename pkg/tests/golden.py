"""Hand-computed metric vectors: (prediction, golds, em, f1)."""

METRIC_VECTORS = [
    ("Barack Obama", ["Barack Obama"], 1, 1.0),
    ("Obama", ["Barack Obama"], 0, 2 / 3),
    ("Paris", ["Lyon", "Paris"], 1, 1.0),
    ("the Eiffel Tower", ["Eiffel Tower"], 1, 1.0),
    ("Eiffel Tower, Paris", ["the Eiffel Tower"], 0, 0.8),
    ("", ["anything"], 0, 0.0),
    ("a", ["the"], 1, 1.0),
    ("1,000", ["1000"], 1, 1.0),
    ("New York City", ["new york", "York City"], 0, 0.8),
    ("cat cat dog", ["cat dog dog"], 0, 2 / 3),
    ("U.S.", ["US"], 1, 1.0),
    ("An Apple a Day", ["apple day"], 1, 1.0),
    ("theatre", ["the atre"], 0, 0.0),
    ("red, blue; green!", ["green blue red"], 0, 1.0),
    ("one two three four", ["one"], 0, 0.4),
    ("Kyoto’s temple", ["Kyotos temple"], 1, 1.0),
    ("«hello»", ["hello"], 1, 1.0),
]

NORMALIZE_VECTORS = [
    ("The Sun!", "sun"),
    ("an apple a day", "apple day"),
    ("x", "x"),
    ("  A  lot\tof   space ", "lot of space"),
    ("The the THE", ""),
    ("rock-n-roll", "rocknroll"),
    ("“quoted”", "quoted"),
]
