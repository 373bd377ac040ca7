use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rusqlite::{params, Connection, OptionalExtension, Transaction};

use super::{
    ChunkWithSource, ClassificationRow, CorpusStore, DocumentSummary, EmbeddingMatrix, StoreError,
    UpsertCounts,
};
use crate::embed::EmbeddingVector;
use crate::eval::{ComparisonRecord, JudgeKind};
use crate::images::{ImageKind, ImageRecord};
use crate::ingest::{ChunkId, ChunkKind, DocId, DocumentRecord, FigureRecord, TextChunk};
use crate::summarize::SummaryRecord;

const MIGRATIONS: &[&str] = &[include_str!("../../migrations/0001_init.sql")];

/// SQLite-backed [`CorpusStore`]. One connection guarded by a mutex, which
/// serializes writers; readers of published matrices never touch it.
pub struct SqliteStore {
    conn: Mutex<Connection>,
}

impl SqliteStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(mut conn: Connection) -> Result<Self, StoreError> {
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.pragma_update(None, "journal_mode", "WAL").ok();
        let current: usize = conn.query_row("PRAGMA user_version", [], |r| r.get(0))?;
        for (i, sql) in MIGRATIONS.iter().enumerate().skip(current) {
            let tx = conn.transaction()?;
            tx.execute_batch(sql)?;
            tx.pragma_update(None, "user_version", i + 1)?;
            tx.commit()?;
        }
        Ok(SqliteStore {
            conn: Mutex::new(conn),
        })
    }

    pub fn schema_version(&self) -> Result<usize, StoreError> {
        Ok(self
            .conn
            .lock()
            .unwrap()
            .query_row("PRAGMA user_version", [], |r| r.get(0))?)
    }
}

fn to_blob(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn from_blob(blob: &[u8]) -> Result<Vec<f32>, StoreError> {
    if blob.len() % 4 != 0 {
        return Err(StoreError::Integrity(format!(
            "vector blob of {} bytes",
            blob.len()
        )));
    }
    Ok(blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn sql_id(id: u64) -> i64 {
    id as i64
}

/// Register the model's dimension on first use; reject anything else later.
fn check_model(tx: &Transaction, model_id: &str, dim: usize) -> Result<(), StoreError> {
    let existing: Option<usize> = tx
        .query_row(
            "SELECT dim FROM models WHERE model_id = ?1",
            [model_id],
            |r| r.get(0),
        )
        .optional()?;
    match existing {
        Some(expected) if expected != dim => Err(StoreError::Schema {
            model_id: model_id.to_string(),
            expected,
            got: dim,
        }),
        Some(_) => Ok(()),
        None => {
            tx.execute(
                "INSERT INTO models (model_id, dim) VALUES (?1, ?2)",
                params![model_id, dim],
            )?;
            Ok(())
        }
    }
}

fn write_chunks(
    tx: &Transaction,
    doc_id: &DocId,
    kind: ChunkKind,
    chunks: &[TextChunk],
    vectors: &[EmbeddingVector],
) -> Result<UpsertCounts, StoreError> {
    if chunks.len() != vectors.len() {
        return Err(StoreError::Invalid(format!(
            "{} chunks but {} vectors",
            chunks.len(),
            vectors.len()
        )));
    }
    if let Some(c) = chunks.iter().find(|c| c.kind != kind || &c.doc_id != doc_id) {
        return Err(StoreError::Invalid(format!(
            "chunk {} does not belong to {doc_id}/{}",
            c.chunk_id,
            kind.as_str()
        )));
    }
    for v in vectors {
        check_model(tx, v.model_id(), v.dim())?;
    }
    tx.execute(
        "DELETE FROM chunks WHERE doc_id = ?1 AND kind = ?2",
        params![doc_id.as_str(), kind.as_str()],
    )?;
    let mut ins_chunk = tx.prepare_cached(
        "INSERT INTO chunks (chunk_id, doc_id, kind, ordinal, char_start, char_end, raw_text, augmented_text)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
    )?;
    let mut ins_vec = tx.prepare_cached(
        "INSERT INTO chunk_embeddings (chunk_id, model_id, vector) VALUES (?1, ?2, ?3)",
    )?;
    for (c, v) in chunks.iter().zip(vectors) {
        ins_chunk.execute(params![
            sql_id(c.chunk_id.0),
            c.doc_id.as_str(),
            c.kind.as_str(),
            c.ordinal,
            c.char_start,
            c.char_end,
            c.raw_text,
            c.augmented_text
        ])?;
        ins_vec.execute(params![sql_id(c.chunk_id.0), v.model_id(), to_blob(v.values())])?;
    }
    Ok(UpsertCounts {
        chunks: chunks.len(),
        vectors: vectors.len(),
    })
}

fn row_to_chunk(r: &rusqlite::Row) -> rusqlite::Result<TextChunk> {
    let kind: String = r.get("kind")?;
    Ok(TextChunk {
        chunk_id: ChunkId(r.get::<_, i64>("chunk_id")? as u64),
        doc_id: DocId(r.get("doc_id")?),
        ordinal: r.get("ordinal")?,
        char_start: r.get("char_start")?,
        char_end: r.get("char_end")?,
        raw_text: r.get("raw_text")?,
        augmented_text: r.get("augmented_text")?,
        kind: ChunkKind::parse(&kind).unwrap_or(ChunkKind::Raw),
    })
}

fn row_to_image(r: &rusqlite::Row) -> rusqlite::Result<ImageRecord> {
    let kind: String = r.get("kind")?;
    Ok(ImageRecord {
        image_id: r.get::<_, i64>("image_id")? as u64,
        kind: if kind == "figure" { ImageKind::Figure } else { ImageKind::Raw },
        doc_id: r.get::<_, Option<String>>("doc_id")?.map(DocId),
        figure_label: r.get("figure_label")?,
        group_key: r.get("group_key")?,
        caption: r.get("caption")?,
        path: PathBuf::from(r.get::<_, String>("path")?),
    })
}

fn matrix_from_query(
    conn: &Connection,
    sql: &str,
    params: &[&dyn rusqlite::ToSql],
    model_id: &str,
) -> Result<EmbeddingMatrix, StoreError> {
    let mut stmt = conn.prepare(sql)?;
    let rows = stmt
        .query_map(params, |r| Ok((r.get::<_, i64>(0)? as u64, r.get::<_, Vec<u8>>(1)?)))?
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(rows.len());
    for (id, blob) in rows {
        out.push((id, from_blob(&blob)?));
    }
    EmbeddingMatrix::from_rows(model_id, out)
        .map_err(|e| StoreError::Integrity(format!("mixed dimensions under {model_id}: {e}")))
}

impl CorpusStore for SqliteStore {
    fn upsert_document(
        &self,
        doc: &DocumentRecord,
        chunks: &[TextChunk],
        vectors: &[EmbeddingVector],
    ) -> Result<UpsertCounts, StoreError> {
        let mut conn = self.conn.lock().unwrap();
        let tx = conn.transaction()?;
        tx.execute(
            "INSERT INTO documents (doc_id, title, authors_json, display_name, abstract_text, body_text, word_count, source_path)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)
             ON CONFLICT(doc_id) DO UPDATE SET
               title = excluded.title, authors_json = excluded.authors_json,
               display_name = excluded.display_name, abstract_text = excluded.abstract_text,
               body_text = excluded.body_text, word_count = excluded.word_count,
               source_path = excluded.source_path",
            params![
                doc.doc_id.as_str(),
                doc.title,
                serde_json::to_string(&doc.authors)?,
                doc.display_name,
                doc.abstract_text,
                doc.body_text,
                doc.word_count,
                doc.source_path.as_ref().map(|p| p.to_string_lossy().into_owned()),
            ],
        )?;
        let counts = write_chunks(&tx, &doc.doc_id, ChunkKind::Raw, chunks, vectors)?;
        // Summaries derive from the raw chunks just replaced.
        tx.execute(
            "DELETE FROM chunks WHERE doc_id = ?1 AND kind = 'summary'",
            [doc.doc_id.as_str()],
        )?;
        tx.commit()?;
        Ok(counts)
    }

    fn replace_chunks(
        &self,
        doc_id: &DocId,
        kind: ChunkKind,
        chunks: &[TextChunk],
        vectors: &[EmbeddingVector],
    ) -> Result<UpsertCounts, StoreError> {
        let mut conn = self.conn.lock().unwrap();
        let tx = conn.transaction()?;
        let exists: bool = tx
            .query_row("SELECT 1 FROM documents WHERE doc_id = ?1", [doc_id.as_str()], |_| Ok(()))
            .optional()?
            .is_some();
        if !exists {
            return Err(StoreError::NotFound(format!("document {doc_id}")));
        }
        let counts = write_chunks(&tx, doc_id, kind, chunks, vectors)?;
        tx.commit()?;
        Ok(counts)
    }

    fn replace_figures(&self, doc_id: &DocId, figures: &[FigureRecord]) -> Result<(), StoreError> {
        let mut conn = self.conn.lock().unwrap();
        let tx = conn.transaction()?;
        tx.execute("DELETE FROM figures WHERE doc_id = ?1", [doc_id.as_str()])?;
        {
            let mut ins = tx.prepare_cached(
                "INSERT INTO figures (doc_id, figure_label, caption, image_ref) VALUES (?1, ?2, ?3, ?4)",
            )?;
            for f in figures {
                ins.execute(params![doc_id.as_str(), f.figure_label, f.caption, f.image_ref])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    fn figures(&self, doc_id: &DocId) -> Result<Vec<FigureRecord>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(
            "SELECT figure_label, caption, image_ref FROM figures WHERE doc_id = ?1 ORDER BY rowid",
        )?;
        let rows = stmt
            .query_map([doc_id.as_str()], |r| {
                Ok(FigureRecord {
                    doc_id: doc_id.clone(),
                    figure_label: r.get(0)?,
                    caption: r.get(1)?,
                    image_ref: r.get(2)?,
                })
            })?
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }

    fn document(&self, doc_id: &DocId) -> Result<DocumentRecord, StoreError> {
        let conn = self.conn.lock().unwrap();
        let row = conn
            .query_row(
                "SELECT title, authors_json, display_name, abstract_text, body_text, word_count, source_path
                 FROM documents WHERE doc_id = ?1",
                [doc_id.as_str()],
                |r| {
                    Ok((
                        r.get::<_, String>(0)?,
                        r.get::<_, String>(1)?,
                        r.get::<_, String>(2)?,
                        r.get::<_, String>(3)?,
                        r.get::<_, String>(4)?,
                        r.get::<_, usize>(5)?,
                        r.get::<_, Option<String>>(6)?,
                    ))
                },
            )
            .optional()?
            .ok_or_else(|| StoreError::NotFound(format!("document {doc_id}")))?;
        Ok(DocumentRecord {
            doc_id: doc_id.clone(),
            title: row.0,
            authors: serde_json::from_str(&row.1)?,
            display_name: row.2,
            abstract_text: row.3,
            body_text: row.4,
            word_count: row.5,
            source_path: row.6.map(PathBuf::from),
        })
    }

    fn documents(&self) -> Result<Vec<DocumentSummary>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(
            "SELECT d.doc_id, d.title, d.display_name, d.word_count,
                    (SELECT COUNT(*) FROM chunks c WHERE c.doc_id = d.doc_id AND c.kind = 'raw'),
                    (SELECT COUNT(*) FROM chunks c WHERE c.doc_id = d.doc_id AND c.kind = 'summary')
             FROM documents d ORDER BY d.doc_id",
        )?;
        let rows = stmt
            .query_map([], |r| {
                Ok(DocumentSummary {
                    doc_id: DocId(r.get(0)?),
                    title: r.get(1)?,
                    display_name: r.get(2)?,
                    word_count: r.get(3)?,
                    raw_chunks: r.get(4)?,
                    summary_chunks: r.get(5)?,
                })
            })?
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }

    fn document_count(&self) -> Result<usize, StoreError> {
        let conn = self.conn.lock().unwrap();
        Ok(conn.query_row("SELECT COUNT(*) FROM documents", [], |r| r.get(0))?)
    }

    fn delete_document(&self, doc_id: &DocId) -> Result<bool, StoreError> {
        let conn = self.conn.lock().unwrap();
        Ok(conn.execute("DELETE FROM documents WHERE doc_id = ?1", [doc_id.as_str()])? > 0)
    }

    fn fetch_chunks(&self, ids: &[ChunkId]) -> Result<Vec<ChunkWithSource>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare_cached(
            "SELECT c.*, d.display_name, d.title FROM chunks c
             JOIN documents d ON d.doc_id = c.doc_id WHERE c.chunk_id = ?1",
        )?;
        ids.iter()
            .map(|id| {
                stmt.query_row([sql_id(id.0)], |r| {
                    Ok(ChunkWithSource {
                        chunk: row_to_chunk(r)?,
                        display_name: r.get("display_name")?,
                        title: r.get("title")?,
                    })
                })
                .optional()?
                .ok_or_else(|| StoreError::NotFound(format!("chunk {id}")))
            })
            .collect()
    }

    fn chunks_of(&self, doc_id: &DocId, kind: ChunkKind) -> Result<Vec<TextChunk>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(
            "SELECT * FROM chunks WHERE doc_id = ?1 AND kind = ?2 ORDER BY ordinal",
        )?;
        let rows = stmt
            .query_map(params![doc_id.as_str(), kind.as_str()], row_to_chunk)?
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }

    fn embedding_matrix(
        &self,
        kind: ChunkKind,
        model_id: &str,
    ) -> Result<EmbeddingMatrix, StoreError> {
        let conn = self.conn.lock().unwrap();
        matrix_from_query(
            &conn,
            "SELECT e.chunk_id, e.vector FROM chunk_embeddings e
             JOIN chunks c ON c.chunk_id = e.chunk_id
             WHERE c.kind = ?1 AND e.model_id = ?2 ORDER BY e.chunk_id",
            &[&kind.as_str(), &model_id],
            model_id,
        )
    }

    fn record_summaries(&self, records: &[SummaryRecord]) -> Result<(), StoreError> {
        let mut conn = self.conn.lock().unwrap();
        let tx = conn.transaction()?;
        {
            let mut ins = tx.prepare_cached(
                "INSERT OR REPLACE INTO summaries (source_chunk_id, doc_id, model_id, created_at, summary_text)
                 VALUES (?1, ?2, ?3, ?4, ?5)",
            )?;
            for s in records {
                ins.execute(params![
                    sql_id(s.source_chunk_id.0),
                    s.doc_id.as_str(),
                    s.model_id,
                    s.created_at as i64,
                    s.text
                ])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    fn summaries_of(&self, doc_id: &DocId) -> Result<Vec<SummaryRecord>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(
            "SELECT s.source_chunk_id, s.model_id, s.created_at, s.summary_text
             FROM summaries s JOIN chunks c ON c.chunk_id = s.source_chunk_id
             WHERE s.doc_id = ?1 ORDER BY c.ordinal",
        )?;
        let rows = stmt
            .query_map([doc_id.as_str()], |r| {
                Ok(SummaryRecord {
                    source_chunk_id: ChunkId(r.get::<_, i64>(0)? as u64),
                    doc_id: doc_id.clone(),
                    model_id: r.get(1)?,
                    created_at: r.get::<_, i64>(2)? as u64,
                    text: r.get(3)?,
                })
            })?
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }

    fn upsert_image(&self, image: &ImageRecord, vector: &EmbeddingVector) -> Result<(), StoreError> {
        let mut conn = self.conn.lock().unwrap();
        let tx = conn.transaction()?;
        check_model(&tx, vector.model_id(), vector.dim())?;
        tx.execute(
            "INSERT OR REPLACE INTO images (image_id, kind, doc_id, figure_label, group_key, caption, path)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            params![
                sql_id(image.image_id),
                image.kind.as_str(),
                image.doc_id.as_ref().map(|d| d.as_str()),
                image.figure_label,
                image.group_key,
                image.caption,
                image.path.to_string_lossy(),
            ],
        )?;
        tx.execute(
            "INSERT OR REPLACE INTO image_embeddings (image_id, model_id, vector) VALUES (?1, ?2, ?3)",
            params![sql_id(image.image_id), vector.model_id(), to_blob(vector.values())],
        )?;
        tx.commit()?;
        Ok(())
    }

    fn image(&self, image_id: u64) -> Result<ImageRecord, StoreError> {
        let conn = self.conn.lock().unwrap();
        conn.query_row(
            "SELECT * FROM images WHERE image_id = ?1",
            [sql_id(image_id)],
            row_to_image,
        )
        .optional()?
        .ok_or_else(|| StoreError::NotFound(format!("image {image_id}")))
    }

    fn images(&self) -> Result<Vec<ImageRecord>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare("SELECT * FROM images ORDER BY image_id")?;
        let rows = stmt
            .query_map([], row_to_image)?
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }

    fn image_matrix(&self, model_id: &str) -> Result<EmbeddingMatrix, StoreError> {
        let conn = self.conn.lock().unwrap();
        matrix_from_query(
            &conn,
            "SELECT image_id, vector FROM image_embeddings WHERE model_id = ?1 ORDER BY image_id",
            &[&model_id],
            model_id,
        )
    }

    fn image_vector(&self, image_id: u64, model_id: &str) -> Result<Vec<f32>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let blob: Vec<u8> = conn
            .query_row(
                "SELECT vector FROM image_embeddings WHERE image_id = ?1 AND model_id = ?2",
                params![sql_id(image_id), model_id],
                |r| r.get(0),
            )
            .optional()?
            .ok_or_else(|| StoreError::NotFound(format!("image {image_id}")))?;
        from_blob(&blob)
    }

    fn insert_comparisons(&self, records: &[ComparisonRecord]) -> Result<usize, StoreError> {
        let mut conn = self.conn.lock().unwrap();
        let tx = conn.transaction()?;
        {
            let mut ins = tx.prepare_cached(
                "INSERT INTO comparisons (doc_a, doc_b, winner, judge) VALUES (?1, ?2, ?3, ?4)",
            )?;
            for c in records {
                ins.execute(params![
                    c.doc_a.as_str(),
                    c.doc_b.as_str(),
                    c.winner.as_str(),
                    c.judge.as_str()
                ])?;
            }
        }
        tx.commit()?;
        Ok(records.len())
    }

    fn comparisons(&self) -> Result<Vec<ComparisonRecord>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare("SELECT doc_a, doc_b, winner, judge FROM comparisons ORDER BY id")?;
        let rows = stmt
            .query_map([], |r| {
                let judge: String = r.get(3)?;
                Ok(ComparisonRecord {
                    doc_a: DocId(r.get(0)?),
                    doc_b: DocId(r.get(1)?),
                    winner: DocId(r.get(2)?),
                    judge: JudgeKind::parse(&judge).unwrap_or(JudgeKind::Llm),
                })
            })?
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }

    fn record_classifications(&self, rows: &[ClassificationRow]) -> Result<(), StoreError> {
        let mut conn = self.conn.lock().unwrap();
        let tx = conn.transaction()?;
        {
            let mut ins = tx.prepare_cached(
                "INSERT OR REPLACE INTO classifications (doc_id, predicted, reply) VALUES (?1, ?2, ?3)",
            )?;
            for c in rows {
                ins.execute(params![c.doc_id.as_str(), c.predicted, c.reply])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    fn classifications(&self) -> Result<Vec<ClassificationRow>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt =
            conn.prepare("SELECT doc_id, predicted, reply FROM classifications ORDER BY doc_id")?;
        let rows = stmt
            .query_map([], |r| {
                Ok(ClassificationRow {
                    doc_id: DocId(r.get(0)?),
                    predicted: r.get(1)?,
                    reply: r.get(2)?,
                })
            })?
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }
}
