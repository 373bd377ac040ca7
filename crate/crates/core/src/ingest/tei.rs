//! TEI XML as emitted by Grobid's full-text endpoint.

use std::collections::HashSet;
use std::path::Path;

use roxmltree::{Document, Node};

use super::{
    derive_doc_id, make_display_name, word_count, Author, DocumentRecord, FigureRecord,
    IngestError,
};

const UNTITLED: &str = "Untitled";

/// Elements whose whole subtree never contributes to the main text.
const SKIPPED: &[&str] = &["figure", "table", "listBibl", "biblStruct", "graphic", "back"];

/// Elements rendered as one paragraph of main text.
const BLOCKS: &[&str] = &["p", "head", "formula", "note", "item", "label", "quote"];

pub fn parse_tei_file(path: &Path) -> Result<(DocumentRecord, Vec<FigureRecord>), IngestError> {
    let bytes = std::fs::read(path)?;
    let (mut doc, figures) = parse_tei(&bytes)?;
    doc.source_path = Some(path.to_path_buf());
    Ok((doc, figures))
}

/// Extract title, authors, abstract, main text and figure captions.
pub fn parse_tei(xml: &[u8]) -> Result<(DocumentRecord, Vec<FigureRecord>), IngestError> {
    let text = std::str::from_utf8(xml).map_err(|e| IngestError::Malformed {
        offset: e.valid_up_to(),
        message: "input is not valid UTF-8".into(),
    })?;
    let dom = Document::parse(text).map_err(|e| IngestError::Malformed {
        offset: byte_offset(text, e.pos().row, e.pos().col),
        message: e.to_string(),
    })?;
    let root = dom.root_element();

    let header = child_by_name(root, "teiHeader");
    let title = header
        .and_then(find_title)
        .unwrap_or_default();
    let authors = header.map(find_authors).unwrap_or_default();
    let abstract_text = header
        .and_then(|h| descendant_by_name(h, "abstract"))
        .map(|a| blocks_of(a).join("\n\n"))
        .unwrap_or_default();

    let body = descendant_by_name(root, "body").ok_or(IngestError::MissingBody)?;
    let body_text = blocks_of(body).join("\n\n");

    let shown_title = if title.is_empty() { UNTITLED } else { title.as_str() };
    let display_name = make_display_name(&authors, shown_title)?;
    let doc_id = derive_doc_id(&title, &authors, xml);

    let figures = collect_figures(root, &doc_id);

    Ok((
        DocumentRecord {
            doc_id,
            title,
            authors,
            display_name,
            abstract_text,
            word_count: word_count(&body_text),
            body_text,
            source_path: None,
        },
        figures,
    ))
}

fn byte_offset(text: &str, row: u32, col: u32) -> usize {
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if i + 1 == row as usize {
            let cols = col.saturating_sub(1) as usize;
            return offset + line.char_indices().nth(cols).map_or(line.len(), |(b, _)| b);
        }
        offset += line.len();
    }
    text.len()
}

fn is(node: Node, name: &str) -> bool {
    node.is_element() && node.tag_name().name() == name
}

fn child_by_name<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| is(*c, name))
}

fn descendant_by_name<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.descendants().find(|c| is(*c, name))
}

fn find_title(header: Node) -> Option<String> {
    let title_stmt = descendant_by_name(header, "titleStmt")?;
    let titles: Vec<Node> = title_stmt.children().filter(|c| is(*c, "title")).collect();
    let pick = titles
        .iter()
        .find(|t| t.attribute("type") == Some("main"))
        .or_else(|| titles.first())?;
    let t = normalized_text(*pick);
    (!t.is_empty()).then_some(t)
}

fn find_authors(header: Node) -> Vec<Author> {
    let Some(source) = descendant_by_name(header, "sourceDesc") else {
        return Vec::new();
    };
    // The analytic block describes the article itself; monograph authors
    // are only a fallback for book chapters without one.
    let scope = descendant_by_name(source, "analytic").unwrap_or(source);
    scope
        .descendants()
        .filter(|n| is(*n, "author"))
        .filter_map(|a| {
            let pers = descendant_by_name(a, "persName")?;
            let surname = descendant_by_name(pers, "surname").map(normalized_text)?;
            if surname.is_empty() {
                return None;
            }
            let given: Vec<String> = pers
                .children()
                .filter(|c| is(*c, "forename"))
                .map(normalized_text)
                .filter(|s| !s.is_empty())
                .collect();
            Some(Author {
                given: (!given.is_empty()).then(|| given.join(" ")),
                surname,
            })
        })
        .collect()
}

fn is_reference_div(node: Node) -> bool {
    is(node, "div")
        && matches!(
            node.attribute("type"),
            Some("references") | Some("bibliography")
        )
}

fn skipped(node: Node) -> bool {
    node.is_element() && (SKIPPED.contains(&node.tag_name().name()) || is_reference_div(node))
}

/// Paragraph-level text blocks under `node`, in document order.
fn blocks_of(node: Node) -> Vec<String> {
    let mut out = Vec::new();
    collect_blocks(node, &mut out);
    out
}

fn collect_blocks(node: Node, out: &mut Vec<String>) {
    for child in node.children() {
        if skipped(child) {
            continue;
        }
        if child.is_text() {
            let t = collapse_ws(child.text().unwrap_or(""));
            if !t.is_empty() {
                out.push(t);
            }
        } else if child.is_element() {
            if BLOCKS.contains(&child.tag_name().name()) {
                let t = normalized_text(child);
                if !t.is_empty() {
                    out.push(t);
                }
            } else {
                collect_blocks(child, out);
            }
        }
    }
}

/// Text content of a subtree with whitespace runs collapsed, leaving out
/// skipped elements.
fn normalized_text(node: Node) -> String {
    let mut raw = String::new();
    push_text(node, &mut raw);
    collapse_ws(&raw)
}

fn push_text(node: Node, out: &mut String) {
    for child in node.children() {
        if child.is_text() {
            out.push_str(child.text().unwrap_or(""));
        } else if child.is_element() && !skipped(child) {
            push_text(child, out);
        }
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn collect_figures(root: Node, doc_id: &super::DocId) -> Vec<FigureRecord> {
    let Some(text) = child_by_name(root, "text") else {
        return Vec::new();
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, fig) in text.descendants().filter(|n| is(*n, "figure")).enumerate() {
        let head = child_by_name(fig, "head").map(normalized_text).unwrap_or_default();
        let label = child_by_name(fig, "label").map(normalized_text).unwrap_or_default();
        let base = if !head.is_empty() {
            head
        } else if !label.is_empty() {
            let prefix = if fig.attribute("type") == Some("table") { "Table" } else { "Figure" };
            format!("{prefix} {label}")
        } else {
            format!("Figure {}", i + 1)
        };
        let mut figure_label = base.clone();
        let mut n = 2;
        while !seen.insert(figure_label.clone()) {
            figure_label = format!("{base} ({n})");
            n += 1;
        }
        let caption = child_by_name(fig, "figDesc").map(normalized_text).unwrap_or_default();
        let image_ref = child_by_name(fig, "graphic")
            .and_then(|g| g.attribute("url").map(str::to_string))
            .or_else(|| {
                fig.attribute(("http://www.w3.org/XML/1998/namespace", "id"))
                    .map(str::to_string)
            });
        out.push(FigureRecord {
            doc_id: doc_id.clone(),
            figure_label,
            caption,
            image_ref,
        });
    }
    out
}
