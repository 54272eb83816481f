//! Pascal VOC annotation subset: `annotation/object/{name,bndbox}` with
//! integer `xmin/ymin/xmax/ymax` coordinates.

use roxmltree::Document;

use super::{Annotation, BBox, DetectError};

/// Parses one annotation document into its object boxes. The optional
/// `<filename>` element becomes each annotation's `frame_id`.
pub fn parse_voc(xml: &str) -> Result<Vec<Annotation>, DetectError> {
    let doc = Document::parse(xml).map_err(|e| DetectError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "annotation" {
        return Err(DetectError::MalformedXml(format!(
            "root element is <{}>, expected <annotation>",
            root.tag_name().name()
        )));
    }
    let frame_id = root
        .children()
        .find(|n| n.has_tag_name("filename"))
        .and_then(|n| n.text())
        .unwrap_or("")
        .trim()
        .to_string();

    let mut annotations = Vec::new();
    for object in root.children().filter(|n| n.has_tag_name("object")) {
        let name = object
            .children()
            .find(|n| n.has_tag_name("name"))
            .and_then(|n| n.text())
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| DetectError::MissingField("object/name".into()))?;
        let bndbox = object
            .children()
            .find(|n| n.has_tag_name("bndbox"))
            .ok_or_else(|| DetectError::MissingField("object/bndbox".into()))?;
        let coordinate = |field: &str| -> Result<f64, DetectError> {
            let path = format!("object/bndbox/{field}");
            let text = bndbox
                .children()
                .find(|n| n.has_tag_name(field))
                .and_then(|n| n.text())
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .ok_or_else(|| DetectError::MissingField(path.clone()))?;
            text.parse::<i64>()
                .map(|v| v as f64)
                .map_err(|_| DetectError::InvalidCoordinate {
                    path,
                    text: text.to_string(),
                })
        };
        let bbox = BBox::new(
            coordinate("xmin")?,
            coordinate("ymin")?,
            coordinate("xmax")?,
            coordinate("ymax")?,
        )?;
        annotations.push(Annotation {
            bbox,
            class_label: name.to_string(),
            frame_id: frame_id.clone(),
        });
    }
    Ok(annotations)
}

/// Writes the same subset back out, for generated corpora.
pub fn to_xml(frame_id: &str, annotations: &[Annotation]) -> String {
    let mut out = String::from("<annotation>\n");
    out.push_str(&format!("  <filename>{frame_id}</filename>\n"));
    for annotation in annotations {
        out.push_str("  <object>\n");
        out.push_str(&format!("    <name>{}</name>\n", annotation.class_label));
        out.push_str("    <bndbox>\n");
        out.push_str(&format!("      <xmin>{}</xmin>\n", annotation.bbox.x_min as i64));
        out.push_str(&format!("      <ymin>{}</ymin>\n", annotation.bbox.y_min as i64));
        out.push_str(&format!("      <xmax>{}</xmax>\n", annotation.bbox.x_max as i64));
        out.push_str(&format!("      <ymax>{}</ymax>\n", annotation.bbox.y_max as i64));
        out.push_str("    </bndbox>\n");
        out.push_str("  </object>\n");
    }
    out.push_str("</annotation>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_object() {
        let xml = r#"
            <annotation>
              <filename>frame_000001</filename>
              <object>
                <name>person</name>
                <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>50</xmax><ymax>80</ymax></bndbox>
              </object>
            </annotation>"#;
        let annotations = parse_voc(xml).unwrap();
        assert_eq!(annotations.len(), 1);
        let a = &annotations[0];
        assert_eq!(a.class_label, "person");
        assert_eq!(a.frame_id, "frame_000001");
        assert_eq!(
            (a.bbox.x_min, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max),
            (10.0, 20.0, 50.0, 80.0)
        );
    }

    #[test]
    fn empty_annotation_yields_empty_list() {
        assert!(parse_voc("<annotation></annotation>").unwrap().is_empty());
    }

    #[test]
    fn missing_bndbox_is_reported_by_path() {
        let xml = "<annotation><object><name>person</name></object></annotation>";
        match parse_voc(xml).unwrap_err() {
            DetectError::MissingField(path) => assert_eq!(path, "object/bndbox"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_coordinate_is_reported_by_path() {
        let xml = r#"
            <annotation><object><name>person</name>
              <bndbox><xmin>1</xmin><ymin>2</ymin><xmax>3</xmax></bndbox>
            </object></annotation>"#;
        match parse_voc(xml).unwrap_err() {
            DetectError::MissingField(path) => assert_eq!(path, "object/bndbox/ymax"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_integer_coordinate_rejected() {
        let xml = r#"
            <annotation><object><name>person</name>
              <bndbox><xmin>a</xmin><ymin>2</ymin><xmax>3</xmax><ymax>4</ymax></bndbox>
            </object></annotation>"#;
        assert!(matches!(
            parse_voc(xml).unwrap_err(),
            DetectError::InvalidCoordinate { .. }
        ));
    }

    #[test]
    fn broken_xml_rejected() {
        assert!(matches!(
            parse_voc("<annotation><object>").unwrap_err(),
            DetectError::MalformedXml(_)
        ));
    }

    #[test]
    fn writer_output_parses_back() {
        let annotations = vec![
            Annotation {
                bbox: BBox::new(4.0, 8.0, 20.0, 40.0).unwrap(),
                class_label: "person".into(),
                frame_id: "frame_7".into(),
            },
            Annotation {
                bbox: BBox::new(60.0, 10.0, 70.0, 35.0).unwrap(),
                class_label: "person".into(),
                frame_id: "frame_7".into(),
            },
        ];
        let xml = to_xml("frame_7", &annotations);
        assert_eq!(parse_voc(&xml).unwrap(), annotations);
    }
}
