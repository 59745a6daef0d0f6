use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde_json::Value;

use super::{PostRecord, UserProfile};
use crate::error::{Error, Result};

pub const POST_COLUMNS: [&str; 16] = [
    "post_id",
    "user_id",
    "raw_views",
    "days_since_publish",
    "post_timestamp",
    "category",
    "language",
    "location",
    "video_format",
    "music_id",
    "duration_s",
    "width_px",
    "height_px",
    "caption",
    "suggested_keywords",
    "tags",
];

pub const USER_COLUMNS: [&str; 9] = [
    "user_id",
    "follower_count",
    "following_count",
    "video_count",
    "like_count",
    "digg_count",
    "heart_count",
    "friend_count",
    "historical_mean_popularity",
];

const LIST_DELIMITER: char = ';';

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

impl TableFormat {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => TableFormat::Json,
            _ => TableFormat::Csv,
        }
    }
}

/// Rows projected onto a fixed column list; `None` for absent or empty cells.
struct RawTable {
    rows: Vec<Vec<Option<String>>>,
}

fn read_table(path: &Path, format: TableFormat, columns: &[&str]) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        TableFormat::Csv => read_csv_table(path, BufReader::new(file), columns),
        TableFormat::Json => read_json_table(path, BufReader::new(file), columns),
    }
}

fn read_csv_table(path: &Path, reader: impl std::io::Read, columns: &[&str]) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut position = vec![None; columns.len()];
    for (i, h) in headers.iter().enumerate() {
        match columns.iter().position(|c| *c == h) {
            Some(k) => position[k] = Some(i),
            None => log::warn!("{}: ignoring unknown column `{h}`", path.display()),
        }
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(
            position
                .iter()
                .map(|p| {
                    p.and_then(|i| record.get(i))
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                })
                .collect(),
        );
    }
    Ok(RawTable { rows })
}

fn read_json_table(path: &Path, reader: impl std::io::Read, columns: &[&str]) -> Result<RawTable> {
    let value: Value = serde_json::from_reader(reader)?;
    let Value::Array(items) = value else {
        return Err(Error::Data(format!(
            "{}: expected a JSON array of objects",
            path.display()
        )));
    };
    let mut warned = HashSet::new();
    let mut rows = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        let Value::Object(map) = item else {
            return Err(Error::row(i + 1, "*", "expected a JSON object"));
        };
        for key in map.keys() {
            if !columns.contains(&key.as_str()) && warned.insert(key.clone()) {
                log::warn!("{}: ignoring unknown key `{key}`", path.display());
            }
        }
        let mut row = Vec::with_capacity(columns.len());
        for col in columns {
            let cell = match map.get(*col) {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s.clone()),
                Some(Value::Number(n)) => Some(n.to_string()),
                Some(Value::Bool(b)) => Some(b.to_string()),
                Some(Value::Array(items)) => {
                    let mut parts = Vec::with_capacity(items.len());
                    for v in items {
                        match v {
                            Value::String(s) => parts.push(s.clone()),
                            other => parts.push(other.to_string()),
                        }
                    }
                    Some(parts.join(&LIST_DELIMITER.to_string()))
                }
                Some(Value::Object(_)) => return Err(Error::row(i + 1, col, "nested objects are not supported")),
            };
            row.push(cell.filter(|s| !s.is_empty()));
        }
        rows.push(row);
    }
    Ok(RawTable { rows })
}

struct Cells<'a> {
    row: usize,
    columns: &'a [&'a str],
    cells: &'a [Option<String>],
}

impl<'a> Cells<'a> {
    fn get(&self, column: &str) -> Option<&'a str> {
        let k = self.columns.iter().position(|c| *c == column)?;
        self.cells[k].as_deref()
    }

    fn required(&self, column: &str) -> Result<&'a str> {
        self.get(column)
            .ok_or_else(|| Error::row(self.row, column, "missing required value"))
    }

    fn parse<T: std::str::FromStr>(&self, column: &str, raw: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        raw.trim()
            .parse::<T>()
            .map_err(|e| Error::row(self.row, column, format!("cannot parse `{raw}`: {e}")))
    }

    fn opt_string(&self, column: &str) -> Option<String> {
        self.get(column).map(str::to_string)
    }

    fn finite(&self, column: &str, raw: &str) -> Result<f64> {
        let v: f64 = self.parse(column, raw)?;
        if !v.is_finite() {
            return Err(Error::row(self.row, column, "non-finite value"));
        }
        Ok(v)
    }

    fn count(&self, column: &str) -> Result<Option<u64>> {
        match self.get(column) {
            None => Ok(None),
            Some(raw) => {
                let v: i128 = self.parse(column, raw)?;
                if v < 0 {
                    return Err(Error::row(self.row, column, format!("negative count {v}")));
                }
                u64::try_from(v)
                    .map(Some)
                    .map_err(|_| Error::row(self.row, column, "count out of range"))
            }
        }
    }

    fn list(&self, column: &str) -> Vec<String> {
        self.get(column)
            .map(|s| {
                s.split(LIST_DELIMITER)
                    .filter(|t| !t.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }
}

fn parse_post(cells: &Cells<'_>) -> Result<PostRecord> {
    let post_id = cells.required("post_id")?.to_string();
    let user_id = cells.required("user_id")?.to_string();
    let raw_views = cells
        .count("raw_views")?
        .ok_or_else(|| Error::row(cells.row, "raw_views", "missing required value"))?;
    let days = cells.finite("days_since_publish", cells.required("days_since_publish")?)?;
    if days <= 0.0 {
        return Err(Error::row(
            cells.row,
            "days_since_publish",
            "non-positive days_since_publish",
        ));
    }
    let post_timestamp = cells.parse("post_timestamp", cells.required("post_timestamp")?)?;
    let duration_s = match cells.get("duration_s") {
        None => None,
        Some(raw) => {
            let v = cells.finite("duration_s", raw)?;
            if v < 0.0 {
                return Err(Error::row(cells.row, "duration_s", "negative duration"));
            }
            Some(v)
        }
    };
    let mut dims = [None, None];
    for (slot, column) in dims.iter_mut().zip(["width_px", "height_px"]) {
        if let Some(raw) = cells.get(column) {
            let v: u32 = cells.parse(column, raw)?;
            if v == 0 {
                return Err(Error::row(cells.row, column, "dimension must be >= 1"));
            }
            *slot = Some(v);
        }
    }
    Ok(PostRecord {
        post_id,
        user_id,
        raw_views,
        days_since_publish: days,
        post_timestamp,
        category: cells.opt_string("category"),
        language: cells.opt_string("language"),
        location: cells.opt_string("location"),
        video_format: cells.opt_string("video_format"),
        music_id: cells.opt_string("music_id"),
        duration_s,
        width_px: dims[0],
        height_px: dims[1],
        caption: cells.get("caption").unwrap_or_default().to_string(),
        suggested_keywords: cells.list("suggested_keywords"),
        tags: cells.list("tags"),
    })
}

pub fn load_posts(path: &Path, format: TableFormat) -> Result<Vec<PostRecord>> {
    let table = read_table(path, format, &POST_COLUMNS)?;
    let mut seen = HashSet::new();
    let mut posts = Vec::with_capacity(table.rows.len());
    for (i, cells) in table.rows.iter().enumerate() {
        let cells = Cells {
            row: i + 1,
            columns: &POST_COLUMNS,
            cells,
        };
        let post = parse_post(&cells)?;
        if !seen.insert(post.post_id.clone()) {
            return Err(Error::DuplicateId {
                kind: "post",
                id: post.post_id,
            });
        }
        posts.push(post);
    }
    Ok(posts)
}

pub fn load_users(path: &Path, format: TableFormat) -> Result<Vec<UserProfile>> {
    let table = read_table(path, format, &USER_COLUMNS)?;
    let mut seen = HashSet::new();
    let mut users = Vec::with_capacity(table.rows.len());
    for (i, cells) in table.rows.iter().enumerate() {
        let cells = Cells {
            row: i + 1,
            columns: &USER_COLUMNS,
            cells,
        };
        let user = UserProfile {
            user_id: cells.required("user_id")?.to_string(),
            follower_count: cells.count("follower_count")?,
            following_count: cells.count("following_count")?,
            video_count: cells.count("video_count")?,
            like_count: cells.count("like_count")?,
            digg_count: cells.count("digg_count")?,
            heart_count: cells.count("heart_count")?,
            friend_count: cells.count("friend_count")?,
            historical_mean_popularity: cells
                .get("historical_mean_popularity")
                .map(|raw| cells.finite("historical_mean_popularity", raw))
                .transpose()?,
        };
        if !seen.insert(user.user_id.clone()) {
            return Err(Error::DuplicateId {
                kind: "user",
                id: user.user_id,
            });
        }
        users.push(user);
    }
    Ok(users)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

pub fn write_posts_csv(path: &Path, posts: &[PostRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(POST_COLUMNS)?;
    let delim = LIST_DELIMITER.to_string();
    for p in posts {
        w.write_record([
            p.post_id.clone(),
            p.user_id.clone(),
            p.raw_views.to_string(),
            p.days_since_publish.to_string(),
            p.post_timestamp.to_string(),
            opt(&p.category),
            opt(&p.language),
            opt(&p.location),
            opt(&p.video_format),
            opt(&p.music_id),
            opt(&p.duration_s),
            opt(&p.width_px),
            opt(&p.height_px),
            p.caption.clone(),
            p.suggested_keywords.join(&delim),
            p.tags.join(&delim),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_users_csv(path: &Path, users: &[UserProfile]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(USER_COLUMNS)?;
    for u in users {
        let mut record = vec![u.user_id.clone()];
        record.extend(u.counts().iter().map(opt));
        record.push(opt(&u.historical_mean_popularity));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const HEADER: &str = "post_id,user_id,raw_views,days_since_publish,post_timestamp,category,language,location,video_format,music_id,duration_s,width_px,height_px,caption,suggested_keywords,tags";

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn loads_valid_posts() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}\n\
             p1,u1,100,2.5,1700000000,music,en,US,mp4,m1,15.5,1080,1920,Hello world,a;b,t1;t2\n\
             p2,u1,0,1,1700003600,,,,,,,,,,,\n\
             p3,u2,7,30,0,dance,fr,,mov,,3,720,720,\"quoted, caption\",,t3\n"
        );
        let path = write(&dir, "posts.csv", &body);
        let posts = load_posts(&path, TableFormat::Csv).unwrap();
        assert_eq!(
            posts.iter().map(|p| p.post_id.as_str()).collect::<Vec<_>>(),
            ["p1", "p2", "p3"]
        );
        assert_eq!(posts[0].tags, ["t1", "t2"]);
        assert_eq!(posts[0].suggested_keywords, ["a", "b"]);
        assert_eq!(posts[1].category, None);
        assert_eq!(posts[1].width_px, None);
        assert_eq!(posts[2].caption, "quoted, caption");
    }

    #[test]
    fn rejects_zero_days_with_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}\np1,u1,100,2,0,,,,,,,,,,,\np2,u1,100,0,0,,,,,,,,,,,\n");
        let path = write(&dir, "posts.csv", &body);
        let err = load_posts(&path, TableFormat::Csv).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("non-positive days_since_publish"), "{msg}");
        assert!(matches!(err, Error::Row { row: 2, ref column, .. } if column == "days_since_publish"));
    }

    #[test]
    fn rejects_malformed_cell() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}\np1,u1,lots,2,0,,,,,,,,,,,\n");
        let path = write(&dir, "posts.csv", &body);
        let err = load_posts(&path, TableFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Row { row: 1, ref column, .. } if column == "raw_views"));
    }

    #[test]
    fn rejects_duplicate_post_id() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}\np1,u1,1,2,0,,,,,,,,,,,\np1,u2,1,2,0,,,,,,,,,,,\n");
        let path = write(&dir, "posts.csv", &body);
        let err = load_posts(&path, TableFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { kind: "post", ref id } if id == "p1"));
    }

    #[test]
    fn extra_columns_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let body = "post_id,user_id,raw_views,days_since_publish,post_timestamp,shares\np1,u1,5,1,0,99\n";
        let path = write(&dir, "posts.csv", body);
        let posts = load_posts(&path, TableFormat::Csv).unwrap();
        assert_eq!(posts.len(), 1);
        assert_eq!(posts[0].raw_views, 5);
    }

    #[test]
    fn users_csv_and_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let body = "user_id,follower_count,following_count,video_count,like_count,digg_count,heart_count,friend_count,historical_mean_popularity\n\
                    u1,10,2,3,4,5,,7,6.5\n\
                    u2,0,0,0,0,0,0,0,\n";
        let path = write(&dir, "users.csv", body);
        let users = load_users(&path, TableFormat::Csv).unwrap();
        assert_eq!(users.len(), 2);
        assert_eq!(users[0].heart_count, None);
        assert_eq!(users[0].follower_count, Some(10));
        assert_eq!(users[1].historical_mean_popularity, None);
    }

    #[test]
    fn users_negative_count_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let body = "user_id,follower_count\nu1,-1\n";
        let path = write(&dir, "users.csv", body);
        let err = load_users(&path, TableFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("negative"), "{err}");
    }

    #[test]
    fn users_duplicate_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "users.csv", "user_id\nu1\nu1\n");
        assert!(matches!(
            load_users(&path, TableFormat::Csv),
            Err(Error::DuplicateId { kind: "user", .. })
        ));
    }

    #[test]
    fn json_posts_match_csv_posts() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = write(
            &dir,
            "posts.csv",
            &format!("{HEADER}\np1,u1,100,2.5,1700000000,music,en,US,mp4,m1,15.5,1080,1920,Hi,a;b,t1;t2\n"),
        );
        let json_path = write(
            &dir,
            "posts.json",
            r#"[{"post_id":"p1","user_id":"u1","raw_views":100,"days_since_publish":2.5,
                "post_timestamp":1700000000,"category":"music","language":"en","location":"US",
                "video_format":"mp4","music_id":"m1","duration_s":15.5,"width_px":1080,
                "height_px":1920,"caption":"Hi","suggested_keywords":["a","b"],"tags":"t1;t2"}]"#,
        );
        assert_eq!(TableFormat::from_path(&json_path), TableFormat::Json);
        assert_eq!(
            load_posts(&csv_path, TableFormat::Csv).unwrap(),
            load_posts(&json_path, TableFormat::Json).unwrap()
        );
    }

    #[test]
    fn write_then_load_posts() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = crate::dataset::tests::post("x,1", "u", 3, 0.125);
        p.caption = "line \"quoted\"".into();
        p.tags = vec!["a".into(), "b".into()];
        let path = dir.path().join("posts.csv");
        write_posts_csv(&path, &[p.clone()]).unwrap();
        assert_eq!(load_posts(&path, TableFormat::Csv).unwrap(), vec![p]);
    }
}
