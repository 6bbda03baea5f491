//! Table-schema CSV reading and writing.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{DatasetError, DistressType, EnvFeature, RawRecord};

pub const LOCATION_COLUMN: &str = "location_id";
pub const TYPE_COLUMN: &str = "distress_type";

/// Column names in file order.
pub fn columns() -> Vec<&'static str> {
    let mut cols = vec![LOCATION_COLUMN, "longitude_gcj", "latitude_gcj", "collect_time"];
    cols.extend(EnvFeature::ALL.iter().map(|f| f.column()));
    cols.extend(["detect_info", "detect_conf", TYPE_COLUMN]);
    cols
}

/// How `collect_time` cells are written.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeFormat {
    /// Fractional days since 1970-01-01.
    #[default]
    Days,
    /// ISO-8601 date or datetime; naive values are read as UTC.
    Iso8601,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowError {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub records: Vec<RawRecord>,
    pub errors: Vec<RowError>,
}

impl LoadReport {
    pub fn skipped(&self) -> usize {
        self.errors.len()
    }
}

const SECONDS_PER_DAY: f64 = 86_400.0;

pub fn parse_time(cell: &str, format: TimeFormat) -> Result<f64, String> {
    let cell = cell.trim();
    match format {
        TimeFormat::Days => cell.parse::<f64>().map_err(|e| format!("collect_time {cell:?}: {e}")),
        TimeFormat::Iso8601 => {
            if let Ok(dt) = DateTime::parse_from_rfc3339(cell) {
                return Ok(dt.timestamp_millis() as f64 / 1000.0 / SECONDS_PER_DAY);
            }
            for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
                if let Ok(dt) = NaiveDateTime::parse_from_str(cell, fmt) {
                    return Ok(dt.and_utc().timestamp_millis() as f64 / 1000.0 / SECONDS_PER_DAY);
                }
            }
            NaiveDate::parse_from_str(cell, "%Y-%m-%d")
                .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() as f64 / SECONDS_PER_DAY)
                .map_err(|e| format!("collect_time {cell:?}: {e}"))
        }
    }
}

fn format_time(days: f64, format: TimeFormat) -> String {
    match format {
        TimeFormat::Days => days.to_string(),
        TimeFormat::Iso8601 => {
            let millis = (days * SECONDS_PER_DAY * 1000.0).round() as i64;
            DateTime::from_timestamp_millis(millis)
                .map(|dt| dt.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string())
                .unwrap_or_else(|| days.to_string())
        }
    }
}

struct ColumnMap {
    location: usize,
    lon: usize,
    lat: usize,
    time: usize,
    env: [usize; 8],
    info: usize,
    conf: usize,
    kind: usize,
}

impl ColumnMap {
    fn from_header(header: &csv::StringRecord) -> Result<Self, DatasetError> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
        };
        let mut env = [0; 8];
        for f in EnvFeature::ALL {
            env[f.index()] = find(f.column())?;
        }
        Ok(Self {
            location: find(LOCATION_COLUMN)?,
            lon: find("longitude_gcj")?,
            lat: find("latitude_gcj")?,
            time: find("collect_time")?,
            env,
            info: find("detect_info")?,
            conf: find("detect_conf")?,
            kind: find(TYPE_COLUMN)?,
        })
    }

    fn parse(&self, row: &csv::StringRecord, format: TimeFormat) -> Result<RawRecord, String> {
        let cell = |i: usize| row.get(i).map(str::trim).ok_or_else(|| format!("missing cell {i}"));
        let num = |i: usize, name: &str| -> Result<f64, String> {
            let c = cell(i)?;
            c.parse::<f64>().map_err(|e| format!("{name} {c:?}: {e}"))
        };
        let code_cell = cell(self.kind)?;
        let code: u8 = code_cell.parse().map_err(|e| format!("{TYPE_COLUMN} {code_cell:?}: {e}"))?;
        let distress_type =
            DistressType::from_code(code).ok_or_else(|| format!("unknown distress type code {code}"))?;
        let loc_cell = cell(self.location)?;
        let mut env = [0.0; 8];
        for f in EnvFeature::ALL {
            env[f.index()] = num(self.env[f.index()], f.column())?;
        }
        let rec = RawRecord {
            location_id: loc_cell.parse().map_err(|e| format!("{LOCATION_COLUMN} {loc_cell:?}: {e}"))?,
            longitude_gcj: num(self.lon, "longitude_gcj")?,
            latitude_gcj: num(self.lat, "latitude_gcj")?,
            collect_time: parse_time(cell(self.time)?, format)?,
            env,
            detect_info: num(self.info, "detect_info")?,
            detect_conf: num(self.conf, "detect_conf")?,
            distress_type,
        };
        rec.validate()?;
        Ok(rec)
    }
}

/// Sorts by `collect_time`, then `location_id`, keeping file order for full ties.
pub fn sort_records(records: &mut [RawRecord]) {
    records.sort_by(|a, b| a.collect_time.total_cmp(&b.collect_time).then(a.location_id.cmp(&b.location_id)));
}

pub fn read_records<R: Read>(reader: R, format: TimeFormat) -> Result<LoadReport, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| DatasetError::Csv(e.to_string()))?.clone();
    let map = ColumnMap::from_header(&header)?;
    let mut report = LoadReport::default();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        match row.map_err(|e| e.to_string()).and_then(|r| map.parse(&r, format)) {
            Ok(rec) => report.records.push(rec),
            Err(message) => report.errors.push(RowError { row: row_no, message }),
        }
    }
    sort_records(&mut report.records);
    Ok(report)
}

pub fn load_records(path: impl AsRef<Path>, format: TimeFormat) -> Result<LoadReport, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    read_records(file, format)
}

pub fn write_records<W: Write>(writer: W, records: &[RawRecord], format: TimeFormat) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| DatasetError::Csv(e.to_string());
    w.write_record(columns()).map_err(csv_err)?;
    for r in records {
        let mut row = vec![
            r.location_id.to_string(),
            r.longitude_gcj.to_string(),
            r.latitude_gcj.to_string(),
            format_time(r.collect_time, format),
        ];
        row.extend(r.env.iter().map(f64::to_string));
        row.extend([r.detect_info.to_string(), r.detect_conf.to_string(), r.distress_type.to_string()]);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| DatasetError::Io(e.to_string()))
}

pub fn save_records(path: impl AsRef<Path>, records: &[RawRecord], format: TimeFormat) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    write_records(std::io::BufWriter::new(file), records, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "location_id,longitude_gcj,latitude_gcj,collect_time,min_tem,max_tem,humidity,wind,pressure,visibility,precipitation,cloud,detect_info,detect_conf,distress_type";

    #[test]
    fn empty_data_section() {
        let report = read_records(format!("{HEADER}\n").as_bytes(), TimeFormat::Days).unwrap();
        assert!(report.records.is_empty());
        assert!(report.errors.is_empty());
    }

    #[test]
    fn swapped_timestamps_come_back_sorted() {
        let csv = format!(
            "{HEADER}\n2,121.0,31.0,19010.5,1,2,3,4,5,6,7,8,0.5,0.9,11\n1,121.1,31.1,19000.25,1,2,3,4,5,6,7,8,1.5,0.8,15\n"
        );
        let report = read_records(csv.as_bytes(), TimeFormat::Days).unwrap();
        let times: Vec<f64> = report.records.iter().map(|r| r.collect_time).collect();
        assert_eq!(times, vec![19000.25, 19010.5]);
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let header = HEADER.replace(",cloud", "");
        let err = read_records(format!("{header}\n").as_bytes(), TimeFormat::Days).unwrap_err();
        assert_eq!(err, DatasetError::MissingColumn("cloud".into()));
    }

    #[test]
    fn bad_rows_are_collected_and_skipped() {
        let csv = format!(
            "{HEADER}\n1,121.0,31.0,19000,1,2,3,4,5,6,7,8,0.5,0.9,11\n\
             2,121.0,31.0,abc,1,2,3,4,5,6,7,8,0.5,0.9,11\n\
             3,121.0,31.0,19001,1,2,3,4,5,6,7,8,-1,0.9,11\n\
             4,121.0,31.0,19002,1,2,3,4,5,6,7,8,1,0.9,12\n\
             5,121.0,31.0,19003,1,2,3,4,5,6,7,8,1,1.5,13\n"
        );
        let report = read_records(csv.as_bytes(), TimeFormat::Days).unwrap();
        assert_eq!(report.records.len(), 1);
        let rows: Vec<usize> = report.errors.iter().map(|e| e.row).collect();
        assert_eq!(rows, vec![2, 3, 4, 5]);
        assert!(report.errors[2].message.contains("distress type"));
    }

    #[test]
    fn iso_timestamps() {
        assert_eq!(parse_time("1970-01-02", TimeFormat::Iso8601).unwrap(), 1.0);
        assert_eq!(parse_time("1970-01-01T12:00:00Z", TimeFormat::Iso8601).unwrap(), 0.5);
        assert_eq!(parse_time("1970-01-01 06:00:00", TimeFormat::Iso8601).unwrap(), 0.25);
        assert!(parse_time("yesterday", TimeFormat::Iso8601).is_err());
    }
}
