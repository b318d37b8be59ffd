import pytest


@pytest.fixture
def write_records(tmp_path):
    """Writer for ingestion CSVs built from VelocitySeries objects.

    Integer day ids become ISO dates in January 2026; the optional
    length_m map attaches a road_length_m column.
    """

    def _write(series_list, name="records.csv", length_m=None):
        header = "road_id,day,slice,velocity"
        if length_m is not None:
            header += ",road_length_m"
        rows = [header]
        for series in series_list:
            day = series.day if isinstance(series.day, str) else f"2026-01-{series.day:02d}"
            for i, v in enumerate(series.values, start=1):
                row = f"{series.road_id},{day},{i},{float(v)!r}"
                if length_m is not None:
                    row += f",{length_m.get(series.road_id, '')}"
                rows.append(row)
        path = tmp_path / name
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        return path

    return _write
