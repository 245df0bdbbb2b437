//! XML serialization of the XES subset.
//!
//! Recognized document shape: a root `log` element with `extension`,
//! `global` (scope="trace"/"event"), `classifier`, `trace` and `event`
//! children; attribute elements `string`, `date`, `int`, `float` and
//! `boolean`, each carrying `key` and `value` XML attributes. `date`
//! values are ISO-8601 with millisecond precision and a zone offset.

use std::borrow::Cow;

use chrono::{DateTime, FixedOffset, SecondsFormat};
use quick_xml::events::attributes::Attribute as XmlAttribute;
use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, Event as XmlEvent};
use quick_xml::name::QName;
use quick_xml::{Reader, Writer, XmlVersion};

use super::{
    AttributeValue, Classifier, Event, EventLog, ExtensionDecl, Trace, XesError, CONCEPT_NAME,
};

pub(crate) fn format_timestamp(ts: DateTime<FixedOffset>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, false)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let clamped = offset.min(text.len());
    let mut line = 1;
    let mut col = 1;
    for byte in text.as_bytes()[..clamped].iter() {
        if *byte == b'\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

struct Cursor<'a> {
    reader: Reader<&'a [u8]>,
    text: &'a str,
    trace_index: usize,
    event_index: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        let mut reader = Reader::from_str(text);
        reader.config_mut().trim_text(true);
        Cursor {
            reader,
            text,
            trace_index: 0,
            event_index: 0,
        }
    }

    fn malformed(&self, message: impl Into<String>) -> XesError {
        let (line, column) = line_column(self.text, self.reader.error_position() as usize);
        XesError::Malformed {
            line,
            column,
            message: message.into(),
        }
    }

    fn unsupported(&self, message: impl Into<String>) -> XesError {
        let (line, column) = line_column(self.text, self.reader.buffer_position() as usize);
        XesError::Unsupported {
            line,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<XmlEvent<'a>, XesError> {
        self.reader
            .read_event()
            .map_err(|e| self.malformed(e.to_string()))
    }
}

fn xml_attr(
    cursor: &Cursor<'_>,
    element: &BytesStart<'_>,
    name: &str,
) -> Result<Option<String>, XesError> {
    for attr in element.attributes() {
        let attr = attr.map_err(|e| cursor.malformed(e.to_string()))?;
        if attr.key.as_ref() == name.as_bytes() {
            let value = attr
                .normalized_value(XmlVersion::Implicit1_0)
                .map_err(|e| cursor.malformed(e.to_string()))?;
            return Ok(Some(value.into_owned()));
        }
    }
    Ok(None)
}

fn required_xml_attr(
    cursor: &Cursor<'_>,
    element: &BytesStart<'_>,
    name: &str,
) -> Result<String, XesError> {
    xml_attr(cursor, element, name)?.ok_or_else(|| {
        cursor.unsupported(format!(
            "element <{}> is missing the {name:?} XML attribute",
            String::from_utf8_lossy(element.name().as_ref())
        ))
    })
}

const ATTRIBUTE_TAGS: [&str; 5] = ["string", "date", "int", "float", "boolean"];

fn parse_attribute(
    cursor: &Cursor<'_>,
    tag: &str,
    element: &BytesStart<'_>,
) -> Result<(String, AttributeValue), XesError> {
    let key = required_xml_attr(cursor, element, "key")?;
    if key.is_empty() {
        return Err(cursor.unsupported("attribute key must be non-empty"));
    }
    let raw = required_xml_attr(cursor, element, "value")?;
    let attr_err = |message: String| XesError::Attribute {
        trace: cursor.trace_index,
        event: cursor.event_index,
        key: key.clone(),
        message,
    };
    let value = match tag {
        "string" => AttributeValue::String(raw),
        "date" => {
            let ts = DateTime::parse_from_rfc3339(&raw)
                .map_err(|e| attr_err(format!("timestamp {raw:?} not parseable: {e}")))?;
            AttributeValue::timestamp(ts)
        }
        "int" => AttributeValue::Int(
            raw.parse()
                .map_err(|e| attr_err(format!("integer {raw:?} not parseable: {e}")))?,
        ),
        "float" => AttributeValue::Float(
            raw.parse()
                .map_err(|e| attr_err(format!("float {raw:?} not parseable: {e}")))?,
        ),
        "boolean" => AttributeValue::Boolean(
            raw.parse()
                .map_err(|e| attr_err(format!("boolean {raw:?} not parseable: {e}")))?,
        ),
        _ => unreachable!(),
    };
    Ok((key, value))
}

/// Parses an XES document into an [`EventLog`].
///
/// Unknown attribute keys are preserved verbatim; unknown element kinds
/// (nested or list attributes, `id` values) are rejected.
pub fn parse_xes(xml_text: &str) -> Result<EventLog, XesError> {
    let mut cursor = Cursor::new(xml_text);
    let mut log: Option<EventLog> = None;
    let mut saw_log_end = false;

    loop {
        match cursor.next()? {
            XmlEvent::Decl(_) | XmlEvent::Comment(_) | XmlEvent::PI(_) | XmlEvent::DocType(_) => {}
            XmlEvent::Start(e) if e.name().as_ref() == b"log" && log.is_none() => {
                log = Some(parse_log_body(&mut cursor)?);
                saw_log_end = true;
            }
            XmlEvent::Empty(e) if e.name().as_ref() == b"log" && log.is_none() => {
                log = Some(EventLog::default());
                saw_log_end = true;
            }
            XmlEvent::Eof => break,
            other => {
                return Err(cursor.unsupported(format!(
                    "unexpected {other:?} outside a <log> element"
                )))
            }
        }
    }
    if !saw_log_end {
        return Err(cursor.malformed("document has no <log> element"));
    }
    let log = log.expect("log parsed");
    log.validate()?;
    Ok(log)
}

fn parse_log_body(cursor: &mut Cursor<'_>) -> Result<EventLog, XesError> {
    let mut log = EventLog::default();
    loop {
        match cursor.next()? {
            XmlEvent::Empty(e) => match e.name().as_ref() {
                b"extension" => {
                    log.extensions.insert(ExtensionDecl {
                        name: required_xml_attr(cursor, &e, "name")?,
                        prefix: required_xml_attr(cursor, &e, "prefix")?,
                        uri: required_xml_attr(cursor, &e, "uri")?,
                    });
                }
                b"classifier" => {
                    let keys = required_xml_attr(cursor, &e, "keys")?;
                    log.classifiers.push(Classifier {
                        name: required_xml_attr(cursor, &e, "name")?,
                        keys: keys.split_whitespace().map(str::to_string).collect(),
                    });
                }
                b"global" => {} // empty declaration carries no keys
                b"trace" => {
                    log.traces
                        .push(Trace::new(format!("trace_{}", cursor.trace_index)));
                    cursor.trace_index += 1;
                }
                other => {
                    let tag = String::from_utf8_lossy(other).into_owned();
                    return Err(cursor.unsupported(format!(
                        "unexpected empty element <{tag}> in <log>"
                    )));
                }
            },
            XmlEvent::Start(e) => match e.name().as_ref() {
                b"global" => {
                    let scope = xml_attr(cursor, &e, "scope")?.unwrap_or_else(|| "event".into());
                    let keys = parse_global_body(cursor)?;
                    let target = match scope.as_str() {
                        "trace" => &mut log.global_trace_attributes,
                        "event" => &mut log.global_event_attributes,
                        other => {
                            return Err(cursor.unsupported(format!(
                                "unknown global scope {other:?}"
                            )))
                        }
                    };
                    target.extend(keys);
                }
                b"trace" => {
                    let trace = parse_trace_body(cursor)?;
                    log.traces.push(trace);
                    cursor.trace_index += 1;
                }
                other => {
                    let tag = String::from_utf8_lossy(other).into_owned();
                    return Err(cursor.unsupported(format!("unexpected <{tag}> in <log>")));
                }
            },
            XmlEvent::End(e) if e.name().as_ref() == b"log" => return Ok(log),
            XmlEvent::Eof => return Err(cursor.malformed("unexpected end of input in <log>")),
            other => {
                return Err(cursor.unsupported(format!("unexpected {other:?} in <log>")));
            }
        }
    }
}

fn parse_global_body(cursor: &mut Cursor<'_>) -> Result<Vec<String>, XesError> {
    let mut keys = Vec::new();
    loop {
        match cursor.next()? {
            XmlEvent::Empty(e) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if !ATTRIBUTE_TAGS.contains(&tag.as_str()) {
                    return Err(cursor.unsupported(format!("unexpected <{tag}> in <global>")));
                }
                keys.push(required_xml_attr(cursor, &e, "key")?);
            }
            XmlEvent::End(e) if e.name().as_ref() == b"global" => return Ok(keys),
            XmlEvent::Eof => return Err(cursor.malformed("unexpected end of input in <global>")),
            other => {
                return Err(cursor.unsupported(format!("unexpected {other:?} in <global>")));
            }
        }
    }
}

fn parse_trace_body(cursor: &mut Cursor<'_>) -> Result<Trace, XesError> {
    let mut trace = Trace::new(format!("trace_{}", cursor.trace_index));
    cursor.event_index = 0;
    loop {
        match cursor.next()? {
            XmlEvent::Empty(e) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                match tag.as_str() {
                    t if ATTRIBUTE_TAGS.contains(&t) => {
                        let (key, value) = parse_attribute(cursor, t, &e)?;
                        if key == CONCEPT_NAME {
                            trace.case_id = value.to_string();
                        } else {
                            trace.attributes.insert(key, value);
                        }
                    }
                    "event" => {
                        trace.events.push(Event::new());
                        cursor.event_index += 1;
                    }
                    _ => {
                        return Err(cursor.unsupported(format!("unexpected <{tag}> in <trace>")))
                    }
                }
            }
            XmlEvent::Start(e) if e.name().as_ref() == b"event" => {
                trace.events.push(parse_event_body(cursor)?);
                cursor.event_index += 1;
            }
            XmlEvent::Start(e) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let reason = if ATTRIBUTE_TAGS.contains(&tag.as_str()) || tag == "list" {
                    format!("nested or list attribute <{tag}> is not supported")
                } else {
                    format!("unexpected <{tag}> in <trace>")
                };
                return Err(cursor.unsupported(reason));
            }
            XmlEvent::End(e) if e.name().as_ref() == b"trace" => return Ok(trace),
            XmlEvent::Eof => return Err(cursor.malformed("unexpected end of input in <trace>")),
            other => {
                return Err(cursor.unsupported(format!("unexpected {other:?} in <trace>")));
            }
        }
    }
}

fn parse_event_body(cursor: &mut Cursor<'_>) -> Result<Event, XesError> {
    let mut event = Event::new();
    loop {
        match cursor.next()? {
            XmlEvent::Empty(e) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if !ATTRIBUTE_TAGS.contains(&tag.as_str()) {
                    let reason = if tag == "list" || tag == "id" {
                        format!("<{tag}> attributes are not supported")
                    } else {
                        format!("unexpected <{tag}> in <event>")
                    };
                    return Err(cursor.unsupported(reason));
                }
                let (key, value) = parse_attribute(cursor, &tag, &e)?;
                event.set(key, value);
            }
            XmlEvent::Start(e) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                return Err(cursor.unsupported(format!(
                    "nested content under <{tag}> in <event> is not supported"
                )));
            }
            XmlEvent::End(e) if e.name().as_ref() == b"event" => return Ok(event),
            XmlEvent::Eof => return Err(cursor.malformed("unexpected end of input in <event>")),
            other => {
                return Err(cursor.unsupported(format!("unexpected {other:?} in <event>")));
            }
        }
    }
}

/// Escapes markup and whitespace so attribute values survive the XML
/// attribute-value normalization a conformant reader applies.
fn escape_attr(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for ch in value.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            _ => out.push(ch),
        }
    }
    out
}

fn push_escaped(elem: &mut BytesStart<'_>, name: &'static str, value: &str) {
    elem.push_attribute(XmlAttribute {
        key: QName(name.as_bytes()),
        value: Cow::Owned(escape_attr(value).into_bytes()),
    });
}

fn attribute_element(key: &str, value: &AttributeValue) -> BytesStart<'static> {
    let (tag, text) = match value {
        AttributeValue::String(s) => ("string", s.clone()),
        AttributeValue::Timestamp(ts) => ("date", format_timestamp(*ts)),
        AttributeValue::Int(v) => ("int", v.to_string()),
        AttributeValue::Float(v) => ("float", v.to_string()),
        AttributeValue::Boolean(v) => ("boolean", v.to_string()),
    };
    let mut elem = BytesStart::new(tag);
    push_escaped(&mut elem, "key", key);
    push_escaped(&mut elem, "value", &text);
    elem
}

/// Default declaration value for a global attribute of the given type.
fn global_placeholder(value: &AttributeValue) -> AttributeValue {
    match value {
        AttributeValue::String(_) => AttributeValue::String(String::new()),
        AttributeValue::Timestamp(_) => AttributeValue::timestamp(
            DateTime::parse_from_rfc3339("1970-01-01T00:00:00.000+00:00").expect("epoch"),
        ),
        AttributeValue::Int(_) => AttributeValue::Int(0),
        AttributeValue::Float(_) => AttributeValue::Float(0.0),
        AttributeValue::Boolean(_) => AttributeValue::Boolean(false),
    }
}

fn first_event_value<'a>(log: &'a EventLog, key: &str) -> Option<&'a AttributeValue> {
    log.traces
        .iter()
        .flat_map(|t| t.events.iter())
        .find_map(|e| e.get(key))
}

fn first_trace_value<'a>(log: &'a EventLog, key: &str) -> Option<&'a AttributeValue> {
    if key == CONCEPT_NAME {
        return None; // case ids are strings by construction
    }
    log.traces.iter().find_map(|t| t.attributes.get(key))
}

/// Serializes an [`EventLog`] to an XES document.
///
/// Output is deterministic for a fixed log and parses back to a
/// structurally equal log.
pub fn write_xes(log: &EventLog) -> Result<String, XesError> {
    log.validate()?;
    let mut writer = Writer::new_with_indent(Vec::new(), b'\t', 1);
    let map_err = |e: std::io::Error| XesError::Invalid(format!("write failed: {e}"));

    writer
        .write_event(XmlEvent::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .map_err(map_err)?;
    let mut root = BytesStart::new("log");
    root.push_attribute(("xes.version", "1.0"));
    root.push_attribute(("xes.features", ""));
    writer.write_event(XmlEvent::Start(root)).map_err(map_err)?;

    for ext in &log.extensions {
        let mut elem = BytesStart::new("extension");
        push_escaped(&mut elem, "name", &ext.name);
        push_escaped(&mut elem, "prefix", &ext.prefix);
        push_escaped(&mut elem, "uri", &ext.uri);
        writer.write_event(XmlEvent::Empty(elem)).map_err(map_err)?;
    }
    for (scope, keys) in [
        ("trace", &log.global_trace_attributes),
        ("event", &log.global_event_attributes),
    ] {
        if keys.is_empty() {
            continue;
        }
        let mut open = BytesStart::new("global");
        open.push_attribute(("scope", scope));
        writer.write_event(XmlEvent::Start(open)).map_err(map_err)?;
        for key in keys {
            let sample = if scope == "event" {
                first_event_value(log, key)
            } else {
                first_trace_value(log, key)
            };
            let placeholder = sample
                .map(global_placeholder)
                .unwrap_or_else(|| AttributeValue::String(String::new()));
            writer
                .write_event(XmlEvent::Empty(attribute_element(key, &placeholder)))
                .map_err(map_err)?;
        }
        writer
            .write_event(XmlEvent::End(BytesEnd::new("global")))
            .map_err(map_err)?;
    }
    for classifier in &log.classifiers {
        let mut elem = BytesStart::new("classifier");
        push_escaped(&mut elem, "name", &classifier.name);
        push_escaped(&mut elem, "keys", &classifier.keys.join(" "));
        writer.write_event(XmlEvent::Empty(elem)).map_err(map_err)?;
    }

    for trace in &log.traces {
        writer
            .write_event(XmlEvent::Start(BytesStart::new("trace")))
            .map_err(map_err)?;
        writer
            .write_event(XmlEvent::Empty(attribute_element(
                CONCEPT_NAME,
                &AttributeValue::String(trace.case_id.clone()),
            )))
            .map_err(map_err)?;
        for (key, value) in &trace.attributes {
            if key == CONCEPT_NAME {
                continue;
            }
            writer
                .write_event(XmlEvent::Empty(attribute_element(key, value)))
                .map_err(map_err)?;
        }
        for event in &trace.events {
            writer
                .write_event(XmlEvent::Start(BytesStart::new("event")))
                .map_err(map_err)?;
            for (key, value) in event.attributes() {
                writer
                    .write_event(XmlEvent::Empty(attribute_element(key, value)))
                    .map_err(map_err)?;
            }
            writer
                .write_event(XmlEvent::End(BytesEnd::new("event")))
                .map_err(map_err)?;
        }
        writer
            .write_event(XmlEvent::End(BytesEnd::new("trace")))
            .map_err(map_err)?;
    }

    writer
        .write_event(XmlEvent::End(BytesEnd::new("log")))
        .map_err(map_err)?;
    let bytes = writer.into_inner();
    let mut text = String::from_utf8(bytes).expect("writer output is UTF-8");
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_EVENT_DOC: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1.0" xes.features="">
    <trace>
        <string key="concept:name" value="1"/>
        <event>
            <string key="concept:name" value="MC"/>
            <date key="time:timestamp" value="2015-11-03T08:45:23.000+01:00"/>
        </event>
        <event>
            <string key="concept:name" value="W"/>
            <date key="time:timestamp" value="2015-11-03T08:46:45.000+01:00"/>
        </event>
    </trace>
</log>"#;

    #[test]
    fn parse_preserves_structure() {
        let log = parse_xes(TWO_EVENT_DOC).unwrap();
        assert_eq!(log.traces.len(), 1);
        assert_eq!(log.traces[0].case_id, "1");
        let names: Vec<_> = log.traces[0]
            .events
            .iter()
            .map(|e| e.concept_name().unwrap())
            .collect();
        assert_eq!(names, ["MC", "W"]);
    }

    #[test]
    fn parse_empty_log() {
        let log = parse_xes(r#"<log xes.version="1.0"></log>"#).unwrap();
        assert!(log.traces.is_empty());
    }

    #[test]
    fn write_empty_log_is_minimal_and_parses_back() {
        let text = write_xes(&EventLog::default()).unwrap();
        assert!(text.contains("<log"));
        assert!(!text.contains("<trace"));
        let log = parse_xes(&text).unwrap();
        assert_eq!(log, EventLog::default());
    }

    #[test]
    fn round_trip_two_event_doc() {
        let log = parse_xes(TWO_EVENT_DOC).unwrap();
        let text = write_xes(&log).unwrap();
        let reparsed = parse_xes(&text).unwrap();
        assert_eq!(log, reparsed);
        // idempotence of write(parse(.))
        assert_eq!(text, write_xes(&reparsed).unwrap());
    }

    #[test]
    fn malformed_xml_reports_line_and_column() {
        let err = parse_xes("<log>\n  <trace>\n</log>").unwrap_err();
        match err {
            XesError::Malformed { line, .. } => assert!(line >= 2),
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn bad_timestamp_names_trace_and_event() {
        let doc = r#"<log><trace><event>
            <date key="time:timestamp" value="03/11/2015 08:47:89"/>
        </event></trace></log>"#;
        match parse_xes(doc).unwrap_err() {
            XesError::Attribute { trace, event, key, .. } => {
                assert_eq!((trace, event), (0, 0));
                assert_eq!(key, "time:timestamp");
            }
            other => panic!("expected Attribute error, got {other:?}"),
        }
    }

    #[test]
    fn nested_attributes_are_rejected() {
        let doc = r#"<log><trace><event>
            <string key="a" value="x"><string key="b" value="y"/></string>
        </event></trace></log>"#;
        assert!(matches!(
            parse_xes(doc).unwrap_err(),
            XesError::Unsupported { .. }
        ));
    }

    #[test]
    fn escaped_values_round_trip() {
        let mut trace = Trace::new("a & b");
        let mut event = Event::new();
        event.set(
            CONCEPT_NAME,
            AttributeValue::String("Dishes & cups <cabinet> \"x\"".into()),
        );
        trace.events.push(event);
        let log = EventLog::new(vec![trace]);
        let text = write_xes(&log).unwrap();
        assert_eq!(parse_xes(&text).unwrap(), log);
    }
}
