"""Writes fixtures/ohlcv_600.csv: a seeded geometric random walk in the
CryptoCompare daily histogram layout (Unix `time` in seconds)."""

import csv
import math
import random
from datetime import datetime, timezone, timedelta

rng = random.Random(20190801)
start = datetime(2017, 6, 1, tzinfo=timezone.utc)
close = 2500.0
rows = []
for day in range(600):
    open_ = close * (1.0 + rng.gauss(0.0, 0.004))
    close = close * math.exp(rng.gauss(0.0015, 0.035))
    high = max(open_, close) * (1.0 + abs(rng.gauss(0.0, 0.012)))
    low = min(open_, close) * (1.0 - abs(rng.gauss(0.0, 0.012)))
    volume_from = math.exp(rng.gauss(11.0, 0.35))
    volume_to = volume_from * (open_ + close) / 2.0
    t = int((start + timedelta(days=day)).timestamp())
    rows.append([t, round(close, 2), round(high, 2), round(low, 2), round(open_, 2),
                 round(volume_from, 2), round(volume_to, 2)])

with open("fixtures/ohlcv_600.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["time", "close", "high", "low", "open", "volumefrom", "volumeto"])
    w.writerows(rows)
