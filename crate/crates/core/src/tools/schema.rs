use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::ToolError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ValueType {
    String,
    Integer,
    Number,
    Boolean,
    Enum { values: Vec<String> },
    Object,
    Array,
}

impl ValueType {
    fn json_schema(&self) -> Value {
        match self {
            ValueType::String => json!({"type": "string"}),
            ValueType::Integer => json!({"type": "integer"}),
            ValueType::Number => json!({"type": "number"}),
            ValueType::Boolean => json!({"type": "boolean"}),
            ValueType::Enum { values } => json!({"type": "string", "enum": values}),
            ValueType::Object => json!({"type": "object"}),
            ValueType::Array => json!({"type": "array"}),
        }
    }

    fn admits(&self, v: &Value) -> bool {
        match self {
            ValueType::String => v.is_string(),
            ValueType::Integer => v.is_i64() || v.is_u64(),
            ValueType::Number => v.is_number(),
            ValueType::Boolean => v.is_boolean(),
            ValueType::Enum { values } => v.as_str().is_some_and(|s| values.iter().any(|x| x == s)),
            ValueType::Object => v.is_object(),
            ValueType::Array => v.is_array(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub description: String,
    pub value_type: ValueType,
    pub required: bool,
    pub minimum: Option<f64>,
    pub maximum: Option<f64>,
}

impl ParamSpec {
    pub fn new(name: &str, value_type: ValueType, required: bool, description: &str) -> Self {
        ParamSpec {
            name: name.into(),
            description: description.into(),
            value_type,
            required,
            minimum: None,
            maximum: None,
        }
    }

    pub fn bounded(mut self, minimum: Option<f64>, maximum: Option<f64>) -> Self {
        self.minimum = minimum;
        self.maximum = maximum;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub value_type: ValueType,
    /// Absent fields are allowed; present ones may be null.
    pub optional: bool,
}

impl FieldSpec {
    pub fn required(name: &str, value_type: ValueType) -> Self {
        FieldSpec {
            name: name.into(),
            value_type,
            optional: false,
        }
    }

    pub fn optional(name: &str, value_type: ValueType) -> Self {
        FieldSpec {
            name: name.into(),
            value_type,
            optional: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
    pub result_fields: Vec<FieldSpec>,
    pub capabilities: Vec<String>,
    /// Argument maps that must validate against `parameters`.
    pub examples: Vec<Value>,
}

impl ToolSpec {
    pub fn parameter_schema(&self) -> Value {
        let mut props = Map::new();
        for p in &self.parameters {
            let mut s = p.value_type.json_schema();
            let obj = s.as_object_mut().expect("schema object");
            obj.insert("description".into(), p.description.clone().into());
            if let Some(m) = p.minimum {
                obj.insert("minimum".into(), m.into());
            }
            if let Some(m) = p.maximum {
                obj.insert("maximum".into(), m.into());
            }
            props.insert(p.name.clone(), s);
        }
        let required: Vec<&str> = self.parameters.iter().filter(|p| p.required).map(|p| p.name.as_str()).collect();
        json!({
            "type": "object",
            "properties": props,
            "required": required,
            "additionalProperties": false,
        })
    }

    pub fn result_schema(&self) -> Value {
        let mut props = Map::new();
        for f in &self.result_fields {
            props.insert(f.name.clone(), f.value_type.json_schema());
        }
        let required: Vec<&str> = self.result_fields.iter().filter(|f| !f.optional).map(|f| f.name.as_str()).collect();
        json!({"type": "object", "properties": props, "required": required})
    }

    /// Chat-completions style function declaration.
    pub fn declaration(&self) -> Value {
        json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameter_schema(),
            }
        })
    }

    /// Checks an argument map: no unknown fields, required present, types
    /// and bounds respected. `null` counts as absent.
    pub fn validate_args(&self, args: &Value) -> Result<Map<String, Value>, ToolError> {
        let invalid = |field: &str, reason: String| ToolError::ArgsInvalid {
            field: field.to_string(),
            reason,
        };
        let map = match args {
            Value::Null => Map::new(),
            Value::Object(m) => m.clone(),
            _ => return Err(invalid("", "arguments must be an object".into())),
        };
        for key in map.keys() {
            if !self.parameters.iter().any(|p| &p.name == key) {
                return Err(invalid(key, "unknown parameter".into()));
            }
        }
        let mut clean = Map::new();
        for p in &self.parameters {
            match map.get(&p.name) {
                None | Some(Value::Null) => {
                    if p.required {
                        return Err(invalid(&p.name, "required parameter is missing".into()));
                    }
                }
                Some(v) => {
                    if !p.value_type.admits(v) {
                        return Err(invalid(&p.name, format!("expected {}", type_name(&p.value_type))));
                    }
                    if let Some(x) = v.as_f64() {
                        if !x.is_finite() {
                            return Err(invalid(&p.name, "must be finite".into()));
                        }
                        if p.minimum.is_some_and(|m| x < m) {
                            return Err(invalid(&p.name, format!("below minimum {}", p.minimum.unwrap())));
                        }
                        if p.maximum.is_some_and(|m| x > m) {
                            return Err(invalid(&p.name, format!("above maximum {}", p.maximum.unwrap())));
                        }
                    }
                    clean.insert(p.name.clone(), v.clone());
                }
            }
        }
        Ok(clean)
    }

    /// Problems with a payload against the result schema, empty when it
    /// conforms.
    pub fn check_payload(&self, payload: &Value) -> Vec<String> {
        let Some(obj) = payload.as_object() else {
            return vec!["payload is not an object".into()];
        };
        let mut problems = Vec::new();
        for f in &self.result_fields {
            match obj.get(&f.name) {
                None if !f.optional => problems.push(format!("missing field {}", f.name)),
                Some(Value::Null) if f.optional => {}
                Some(v) if !f.value_type.admits(v) => {
                    problems.push(format!("field {} is not {}", f.name, type_name(&f.value_type)))
                }
                _ => {}
            }
        }
        problems
    }
}

fn type_name(t: &ValueType) -> String {
    match t {
        ValueType::Enum { values } => format!("one of {}", values.join(", ")),
        other => format!("{other:?}").to_ascii_lowercase(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ToolSpec {
        ToolSpec {
            name: "t".into(),
            description: "d".into(),
            parameters: vec![
                ParamSpec::new("bus", ValueType::Integer, true, "bus id").bounded(Some(1.0), None),
                ParamSpec::new("p_mw", ValueType::Number, false, "load"),
            ],
            result_fields: vec![FieldSpec::required("x", ValueType::Number)],
            capabilities: vec![],
            examples: vec![json!({"bus": 3})],
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = spec().validate_args(&json!({"bus": 3, "extra": 1})).unwrap_err();
        assert_eq!(
            e,
            ToolError::ArgsInvalid {
                field: "extra".into(),
                reason: "unknown parameter".into()
            }
        );
    }

    #[test]
    fn bounds_and_types_are_enforced() {
        let s = spec();
        assert!(s.validate_args(&json!({"bus": 0})).is_err());
        assert!(s.validate_args(&json!({"bus": 2.5})).is_err());
        assert!(s.validate_args(&json!({})).is_err());
        assert!(s.validate_args(&json!({"bus": 2, "p_mw": "x"})).is_err());
        assert_eq!(s.validate_args(&json!({"bus": 2, "p_mw": null})).unwrap().len(), 1);
    }

    #[test]
    fn schema_lists_required_and_closes_object() {
        let schema = spec().parameter_schema();
        assert_eq!(schema["required"], json!(["bus"]));
        assert_eq!(schema["additionalProperties"], json!(false));
        assert_eq!(schema["properties"]["bus"]["minimum"], json!(1.0));
    }

    #[test]
    fn payload_check_reports_missing_fields() {
        assert!(spec().check_payload(&json!({"x": 1.0})).is_empty());
        assert_eq!(spec().check_payload(&json!({})).len(), 1);
    }
}
