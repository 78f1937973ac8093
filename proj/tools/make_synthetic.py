# Writes data/synthetic/bars.csv: three tickers of daily geometric random-walk bars.
import datetime
import random
import sys

TICKERS = [("AAA", 50.0, 0.0004, 0.012), ("BBB", 120.0, 0.0002, 0.018), ("CCC", 20.0, 0.0006, 0.025)]
DAYS = 180


def main(path):
    rng = random.Random(20240101)
    day = datetime.date(2021, 1, 4)
    dates = []
    while len(dates) < DAYS:
        if day.weekday() < 5:
            dates.append(day)
        day += datetime.timedelta(days=1)
    rows = []
    for ticker, price, drift, vol in TICKERS:
        close = price
        for k, d in enumerate(dates):
            open_ = close * (1.0 + rng.gauss(0.0, vol / 4))
            close = close * (1.0 + drift + rng.gauss(0.0, vol))
            high = max(open_, close) * (1.0 + abs(rng.gauss(0.0, vol / 2)))
            low = min(open_, close) * (1.0 - abs(rng.gauss(0.0, vol / 2)))
            volume = int(100000 * (1.0 + abs(rng.gauss(0.0, 0.5))))
            if ticker == "CCC" and k == 57:
                continue  # one missing bar, filled during cleaning
            rows.append((d.isoformat(), ticker, open_, high, low, close, volume))
    rows.sort()
    with open(path, "w") as f:
        f.write("timestamp,ticker,open,high,low,close,volume\n")
        for r in rows:
            f.write("%s,%s,%.4f,%.4f,%.4f,%.4f,%d\n" % r)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/synthetic/bars.csv")
