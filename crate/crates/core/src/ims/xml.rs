use std::io::Cursor;

use chrono::{DateTime, SecondsFormat, Utc};
use quick_xml::events::{BytesDecl, BytesText, Event};
use quick_xml::{Reader, Writer};

use super::{
    Ability, Autonomy, Choice, CompetenceDefinition, CompetencyElement, CompetencyRecord, Context, ElementKind,
    Identification, ItemBank, ItemDefinition, KnowledgeItem, KnowledgeKind, LearnerProfile, ModelError, Performance,
    Scope,
};
use crate::irt::{EstimationStatus, ItemParameters};

/// Root element of a repository document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentKind {
    ItemBank,
    Competence,
    Learner,
}

impl DocumentKind {
    pub fn detect(document: &str) -> Result<Self, ModelError> {
        let root = Node::parse(document)?;
        match root.name.as_str() {
            "itemBank" => Ok(Self::ItemBank),
            "competence" => Ok(Self::Competence),
            "learner" => Ok(Self::Learner),
            other => Err(ModelError::Xml {
                line: root.line,
                message: format!("unknown root element <{other}>"),
            }),
        }
    }
}

// Minimal element tree. Text is kept only for leaf content and is trimmed.
#[derive(Debug)]
struct Node {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Node>,
    text: String,
    line: usize,
}

fn line_at(doc: &str, pos: usize) -> usize {
    let end = pos.min(doc.len());
    doc.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
}

impl Node {
    fn parse(doc: &str) -> Result<Node, ModelError> {
        let mut reader = Reader::from_str(doc);
        let xml_err = |pos: u64, message: String| ModelError::Xml {
            line: line_at(doc, pos as usize),
            message,
        };

        let mut stack: Vec<Node> = Vec::new();
        let mut root: Option<Node> = None;
        loop {
            let pos = reader.buffer_position();
            let event = reader
                .read_event()
                .map_err(|e| xml_err(reader.error_position(), e.to_string()))?;
            match event {
                Event::Start(ref e) | Event::Empty(ref e) => {
                    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    let mut attrs = Vec::new();
                    for attr in e.attributes() {
                        let attr = attr.map_err(|err| xml_err(pos, err.to_string()))?;
                        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
                        let value = attr
                            .decode_and_unescape_value(reader.decoder())
                            .map_err(|err| xml_err(pos, err.to_string()))?
                            .into_owned();
                        attrs.push((key, value));
                    }
                    let node = Node {
                        name,
                        attrs,
                        children: Vec::new(),
                        text: String::new(),
                        line: line_at(doc, pos as usize),
                    };
                    if matches!(event, Event::Start(_)) {
                        stack.push(node);
                    } else {
                        Self::attach(&mut stack, &mut root, node, |m| xml_err(pos, m))?;
                    }
                }
                Event::End(_) => {
                    let mut node = stack.pop().ok_or_else(|| xml_err(pos, "unexpected end tag".into()))?;
                    if node.children.is_empty() {
                        node.text = node.text.trim().to_string();
                    } else {
                        node.text.clear();
                    }
                    Self::attach(&mut stack, &mut root, node, |m| xml_err(pos, m))?;
                }
                Event::Text(t) => {
                    let text = t.decode().map_err(|e| xml_err(pos, e.to_string()))?;
                    match stack.last_mut() {
                        Some(top) => top.text.push_str(&text),
                        None if text.trim().is_empty() => {}
                        None => return Err(xml_err(pos, "text outside the root element".into())),
                    }
                }
                Event::CData(t) => {
                    let text = t.decode().map_err(|e| xml_err(pos, e.to_string()))?;
                    if let Some(top) = stack.last_mut() {
                        top.text.push_str(&text);
                    }
                }
                Event::GeneralRef(r) => {
                    let resolved = match r.resolve_char_ref().map_err(|e| xml_err(pos, e.to_string()))? {
                        Some(c) => c,
                        None => {
                            let name = r.decode().map_err(|e| xml_err(pos, e.to_string()))?;
                            match name.as_ref() {
                                "lt" => '<',
                                "gt" => '>',
                                "amp" => '&',
                                "apos" => '\'',
                                "quot" => '"',
                                other => return Err(xml_err(pos, format!("unknown entity '&{other};'"))),
                            }
                        }
                    };
                    if let Some(top) = stack.last_mut() {
                        top.text.push(resolved);
                    }
                }
                Event::Eof => break,
                _ => {}
            }
        }
        if let Some(open) = stack.last() {
            return Err(ModelError::Xml {
                line: line_at(doc, doc.len()),
                message: format!("unclosed element <{}>", open.name),
            });
        }
        root.ok_or_else(|| ModelError::Xml {
            line: 1,
            message: "document has no root element".into(),
        })
    }

    fn attach(
        stack: &mut [Node],
        root: &mut Option<Node>,
        node: Node,
        err: impl Fn(String) -> ModelError,
    ) -> Result<(), ModelError> {
        match stack.last_mut() {
            Some(parent) => parent.children.push(node),
            None if root.is_none() => *root = Some(node),
            None => return Err(err("more than one root element".into())),
        }
        Ok(())
    }

    fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn children<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Node> + 'a {
        self.children.iter().filter(move |c| c.name == name)
    }

    fn child(&self, name: &str) -> Option<&Node> {
        self.children.iter().find(|c| c.name == name)
    }

    fn expect_root(&self, name: &str) -> Result<(), ModelError> {
        if self.name == name {
            Ok(())
        } else {
            Err(ModelError::Xml {
                line: self.line,
                message: format!("expected <{name}> root element, found <{}>", self.name),
            })
        }
    }
}

// Attribute access scoped to one entity so errors name the entity id and field.
struct Fields<'a> {
    entity: &'static str,
    id: &'a str,
    node: &'a Node,
}

impl<'a> Fields<'a> {
    fn new(entity: &'static str, node: &'a Node) -> Self {
        Self {
            entity,
            id: node.attr("identifier").unwrap_or(""),
            node,
        }
    }

    fn invalid(&self, field: &'static str, message: impl Into<String>) -> ModelError {
        ModelError::invalid(self.entity, self.id, field, format!("{} (line {})", message.into(), self.node.line))
    }

    fn required(&self, field: &'static str) -> Result<&'a str, ModelError> {
        self.node.attr(field).ok_or_else(|| self.invalid(field, "missing attribute"))
    }

    fn number<T: std::str::FromStr>(&self, field: &'static str) -> Result<T, ModelError> {
        let raw = self.required(field)?;
        raw.trim()
            .parse()
            .map_err(|_| self.invalid(field, format!("cannot parse '{raw}'")))
    }

    fn optional_number(&self, field: &'static str, default: f64) -> Result<f64, ModelError> {
        match self.node.attr(field) {
            None => Ok(default),
            Some(_) => self.number(field),
        }
    }

    fn keyword<T>(&self, field: &'static str, parse: fn(&str) -> Option<T>) -> Result<T, ModelError> {
        let raw = self.required(field)?;
        parse(raw).ok_or_else(|| self.invalid(field, format!("unknown value '{raw}'")))
    }

    fn child_text(&self, field: &'static str) -> Result<String, ModelError> {
        self.node
            .child(field)
            .map(|c| c.text.clone())
            .ok_or_else(|| self.invalid(field, "missing element"))
    }
}

/// Parses an item-bank document into its items, in document order.
pub fn parse_item_bank(document: &str) -> Result<ItemBank, ModelError> {
    let root = Node::parse(document)?;
    root.expect_root("itemBank")?;
    let competence_ref = root.attr("competenceRef").map(str::to_string);
    let mut items = Vec::new();
    for node in root.children("item") {
        let f = Fields::new("item", node);
        let competence = competence_ref
            .clone()
            .ok_or_else(|| f.invalid("competenceRef", "item bank without competenceRef attribute"))?;
        let a = f.optional_number("a", 1.0)?;
        let b: f64 = f.number("b")?;
        let scale = ItemParameters::new(a, b).map_err(|e| f.invalid(if a > 0.0 { "b" } else { "a" }, e.to_string()))?;
        let choices = node
            .children("choice")
            .map(|c| {
                Ok(Choice {
                    id: Fields::new("choice", c).required("identifier")?.to_string(),
                    text: c.text.clone(),
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let item = ItemDefinition {
            id: f.required("identifier")?.to_string(),
            body: f.child_text("body")?,
            choices,
            correct_choice: f.child_text("correct")?,
            scale,
            importance: f.optional_number("importance", 1.0)?,
            element_ref: f.required("elementRef")?.to_string(),
            competence_ref: competence,
        };
        item.validate()?;
        items.push(item);
    }
    Ok(ItemBank { competence_ref, items })
}

pub fn parse_competence(document: &str) -> Result<CompetenceDefinition, ModelError> {
    let root = Node::parse(document)?;
    root.expect_root("competence")?;
    let f = Fields::new("competence", &root);
    let delivery = root.child("delivery").ok_or_else(|| f.invalid("delivery", "missing element"))?;
    let df = Fields { node: delivery, ..Fields::new("competence", &root) };

    let prerequisites = root
        .children("prerequisite")
        .map(|p| Fields { node: p, ..Fields::new("competence", &root) }.required("ref").map(str::to_string))
        .collect::<Result<Vec<_>, _>>()?;

    let mut elements = Vec::new();
    for node in root.children("element") {
        let ef = Fields::new("element", node);
        let knowledge = node
            .children("knowledge")
            .map(|k| {
                Ok(KnowledgeItem {
                    label: k.text.clone(),
                    kind: Fields { node: k, ..Fields::new("element", node) }.keyword("kind", KnowledgeKind::parse)?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let perf = node.child("performance").ok_or_else(|| ef.invalid("performance", "missing element"))?;
        let pf = Fields { node: perf, ..Fields::new("element", node) };
        elements.push(CompetencyElement {
            id: ef.required("identifier")?.to_string(),
            ability: ef.keyword("ability", Ability::parse)?,
            kind: ef.keyword("kind", ElementKind::parse)?,
            knowledge,
            performance: Performance {
                context: pf.keyword("context", Context::parse)?,
                complexity: pf.number("complexity")?,
                autonomy: pf.keyword("autonomy", Autonomy::parse)?,
                scope: pf.keyword("scope", Scope::parse)?,
                frequency: pf.number("frequency")?,
            },
        });
    }

    let competence = CompetenceDefinition {
        id: f.required("identifier")?.to_string(),
        title: f.child_text("title")?,
        description: root.child("description").map(|d| d.text.clone()).unwrap_or_default(),
        prerequisites,
        elements,
        required_questions: df.number("questions")?,
        choices_per_question: df.number("choices")?,
    };
    competence.validate()?;
    Ok(competence)
}

pub fn parse_profile(document: &str) -> Result<LearnerProfile, ModelError> {
    let root = Node::parse(document)?;
    root.expect_root("learner")?;
    let f = Fields::new("learner", &root);
    let identification = root
        .child("identification")
        .map(|n| Identification {
            name: n.child("name").map(|c| c.text.clone()).unwrap_or_default(),
            affiliation: n.child("affiliation").map(|c| c.text.clone()).unwrap_or_default(),
        })
        .unwrap_or_default();

    let mut records = Vec::new();
    for node in root.children("competencyRecord") {
        let rf = Fields { node, ..Fields::new("learner", &root) };
        let raw_ts = rf.required("timestamp")?;
        let timestamp = DateTime::parse_from_rfc3339(raw_ts)
            .map_err(|e| rf.invalid("timestamp", format!("'{raw_ts}' is not RFC 3339: {e}")))?
            .with_timezone(&Utc);
        records.push(CompetencyRecord {
            competence_ref: rf.required("competenceRef")?.to_string(),
            theta: rf.number("theta")?,
            standard_error: rf.number("stderr")?,
            status: rf.keyword("status", EstimationStatus::parse)?,
            items: rf.number("items")?,
            timestamp,
        });
    }
    let profile = LearnerProfile {
        id: f.required("identifier")?.to_string(),
        identification,
        records,
    };
    profile.validate()?;
    Ok(profile)
}

// f64 Display is the shortest representation that parses back to the same value.
fn real(x: f64) -> String {
    format!("{x}")
}

fn timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

type XmlWriter = Writer<Cursor<Vec<u8>>>;

fn write_document(f: impl FnOnce(&mut XmlWriter) -> std::io::Result<()>) -> String {
    let mut w = Writer::new_with_indent(Cursor::new(Vec::new()), b' ', 2);
    // Writing into a Vec cannot fail.
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .and_then(|_| f(&mut w))
        .expect("in-memory XML write");
    let mut out = String::from_utf8(w.into_inner().into_inner()).expect("writer emits UTF-8");
    out.push('\n');
    out
}

fn text_element(w: &mut XmlWriter, name: &str, text: &str) -> std::io::Result<()> {
    w.create_element(name).write_text_content(BytesText::new(text))?;
    Ok(())
}

pub fn serialize_item_bank(bank: &ItemBank) -> String {
    write_document(|w| {
        let mut root = w.create_element("itemBank");
        if let Some(c) = &bank.competence_ref {
            root = root.with_attribute(("competenceRef", c.as_str()));
        }
        if bank.items.is_empty() {
            root.write_empty()?;
            return Ok(());
        }
        root.write_inner_content(|w| {
            for item in &bank.items {
                let (a, b, importance) = (
                    real(item.scale.discrimination()),
                    real(item.scale.difficulty()),
                    real(item.importance),
                );
                w.create_element("item")
                    .with_attributes([
                        ("identifier", item.id.as_str()),
                        ("a", a.as_str()),
                        ("b", b.as_str()),
                        ("importance", importance.as_str()),
                        ("elementRef", item.element_ref.as_str()),
                    ])
                    .write_inner_content(|w| {
                        text_element(w, "body", &item.body)?;
                        for c in &item.choices {
                            w.create_element("choice")
                                .with_attribute(("identifier", c.id.as_str()))
                                .write_text_content(BytesText::new(&c.text))?;
                        }
                        text_element(w, "correct", &item.correct_choice)
                    })?;
            }
            Ok(())
        })?;
        Ok(())
    })
}

pub fn serialize_competence(c: &CompetenceDefinition) -> String {
    write_document(|w| {
        w.create_element("competence")
            .with_attribute(("identifier", c.id.as_str()))
            .write_inner_content(|w| {
                text_element(w, "title", &c.title)?;
                text_element(w, "description", &c.description)?;
                for p in &c.prerequisites {
                    w.create_element("prerequisite").with_attribute(("ref", p.as_str())).write_empty()?;
                }
                let (n, m) = (c.required_questions.to_string(), c.choices_per_question.to_string());
                w.create_element("delivery")
                    .with_attributes([("questions", n.as_str()), ("choices", m.as_str())])
                    .write_empty()?;
                for e in &c.elements {
                    w.create_element("element")
                        .with_attributes([
                            ("identifier", e.id.as_str()),
                            ("ability", e.ability.as_str()),
                            ("kind", e.kind.as_str()),
                        ])
                        .write_inner_content(|w| {
                            for k in &e.knowledge {
                                w.create_element("knowledge")
                                    .with_attribute(("kind", k.kind.as_str()))
                                    .write_text_content(BytesText::new(&k.label))?;
                            }
                            let p = &e.performance;
                            let (cx, fq) = (p.complexity.to_string(), p.frequency.to_string());
                            w.create_element("performance")
                                .with_attributes([
                                    ("context", p.context.as_str()),
                                    ("complexity", cx.as_str()),
                                    ("autonomy", p.autonomy.as_str()),
                                    ("scope", p.scope.as_str()),
                                    ("frequency", fq.as_str()),
                                ])
                                .write_empty()?;
                            Ok(())
                        })?;
                }
                Ok(())
            })?;
        Ok(())
    })
}

pub fn serialize_profile(p: &LearnerProfile) -> String {
    write_document(|w| {
        w.create_element("learner")
            .with_attribute(("identifier", p.id.as_str()))
            .write_inner_content(|w| {
                w.create_element("identification").write_inner_content(|w| {
                    text_element(w, "name", &p.identification.name)?;
                    text_element(w, "affiliation", &p.identification.affiliation)
                })?;
                for r in &p.records {
                    let (theta, se, items, ts) =
                        (real(r.theta), real(r.standard_error), r.items.to_string(), timestamp(&r.timestamp));
                    w.create_element("competencyRecord")
                        .with_attributes([
                            ("competenceRef", r.competence_ref.as_str()),
                            ("theta", theta.as_str()),
                            ("stderr", se.as_str()),
                            ("status", r.status.as_str()),
                            ("items", items.as_str()),
                            ("timestamp", ts.as_str()),
                        ])
                        .write_empty()?;
                }
                Ok(())
            })?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ITEM: &str = r#"<?xml version="1.0"?>
<itemBank competenceRef="sql">
  <item identifier="q1" a="1.5" b="-0.25" importance="0.8" elementRef="e1">
    <body>Which keyword removes rows &amp; keeps the table?</body>
    <choice identifier="A">DROP</choice>
    <choice identifier="B">DELETE</choice>
    <correct>B</correct>
  </item>
</itemBank>"#;

    #[test]
    fn parses_items_and_entities() {
        let bank = parse_item_bank(ITEM).unwrap();
        assert_eq!(bank.competence_ref.as_deref(), Some("sql"));
        let item = &bank.items[0];
        assert_eq!(item.body, "Which keyword removes rows & keeps the table?");
        assert_eq!(item.scale.discrimination(), 1.5);
        assert_eq!(item.scale.difficulty(), -0.25);
        assert_eq!(item.choices.len(), 2);
        assert!(item.is_correct("B"));
        assert_eq!(parse_item_bank(&serialize_item_bank(&bank)).unwrap(), bank);
    }

    #[test]
    fn empty_bank_is_empty() {
        assert!(parse_item_bank("<itemBank/>").unwrap().items.is_empty());
        let bank = ItemBank::default();
        assert_eq!(parse_item_bank(&serialize_item_bank(&bank)).unwrap(), bank);
    }

    #[test]
    fn discrimination_defaults_to_one() {
        let doc = ITEM.replace(r#"a="1.5" "#, "");
        assert_eq!(parse_item_bank(&doc).unwrap().items[0].scale.discrimination(), 1.0);
    }

    #[test]
    fn missing_correct_choice_names_item_and_field() {
        let doc = ITEM.replace("<correct>B</correct>", "<correct>Z</correct>");
        match parse_item_bank(&doc).unwrap_err() {
            ModelError::Invalid { entity, id, field, .. } => {
                assert_eq!((entity, id.as_str(), field), ("item", "q1", "correct"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_choice_ids_are_rejected() {
        let doc = ITEM.replace(r#"<choice identifier="B">"#, r#"<choice identifier="A">"#);
        let err = parse_item_bank(&doc).unwrap_err().to_string();
        assert!(err.contains("duplicate choice"), "{err}");
    }

    #[test]
    fn non_positive_discrimination_is_rejected() {
        let doc = ITEM.replace(r#"a="1.5""#, r#"a="0""#);
        assert!(matches!(parse_item_bank(&doc), Err(ModelError::Invalid { field: "a", .. })));
    }

    #[test]
    fn malformed_xml_reports_the_line() {
        let doc = "<itemBank competenceRef=\"x\">\n  <item>\n  </itm>\n</itemBank>";
        match parse_item_bank(doc).unwrap_err() {
            ModelError::Xml { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_item_bank("<itemBank>"), Err(ModelError::Xml { .. })));
    }

    #[test]
    fn detects_document_kinds() {
        assert_eq!(DocumentKind::detect(ITEM).unwrap(), DocumentKind::ItemBank);
        assert_eq!(DocumentKind::detect("<learner identifier='x'/>").unwrap(), DocumentKind::Learner);
        assert!(DocumentKind::detect("<other/>").is_err());
    }

    #[test]
    fn profile_without_records_round_trips() {
        let p = LearnerProfile::new("learner-7");
        let xml = serialize_profile(&p);
        assert_eq!(parse_profile(&xml).unwrap(), p);
    }

    #[test]
    fn profile_reals_and_timestamps_are_lossless() {
        let mut p = LearnerProfile::new("l");
        p.records.push(CompetencyRecord {
            competence_ref: "sql".into(),
            theta: 1.4881638614130055,
            standard_error: 0.47398494038899497,
            status: EstimationStatus::Converged,
            items: 20,
            timestamp: DateTime::from_timestamp(1_700_000_000, 123_456_789).unwrap(),
        });
        let back = parse_profile(&serialize_profile(&p)).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.records[0].theta.to_bits(), p.records[0].theta.to_bits());
    }
}
