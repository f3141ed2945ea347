# JSON-compatible types shared by configuration documents and run summaries.
type JValue = JObject | JArray | str | int | float | bool | None
type JObject = dict[str, JValue]
type JArray = list[JValue]


def json_type_from_value(value: object) -> str:
    """Name the JSON type of a decoded value, for configuration error messages."""
    match value:
        case dict():
            return "object"
        case list():
            return "array"
        case str():
            return "string"
        case bool():
            return "boolean"
        case int():
            return "number (integer)"
        case float():
            return "number (float)"
        case None:
            return "null"
        case _:
            return f"non-JSON type: {type(value).__name__}"


# Narrowing for documents this package wrote itself, such as summary.json read back
# in tests. Configuration input goes through config._Section, which raises ConfigError.


def j_object(v: JValue) -> JObject:
    assert isinstance(v, dict), f"expected a JSON object, got {json_type_from_value(v)}"
    return v


def j_array(v: JValue) -> JArray:
    assert isinstance(v, list), f"expected a JSON array, got {json_type_from_value(v)}"
    return v
