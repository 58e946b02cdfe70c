"""Builds the chat-completions wire goldens independently of the C++ code.

Run from the repository root: python3 tests/acceptance/wire/make_wire_goldens.py
"""
import base64
import json
import pathlib

HERE = pathlib.Path(__file__).parent
ROOT = HERE.parents[2]
SYSTEM = ("You are one member of a model consortium. Answer the task on your own, "
          "following the required output format.")


def canonical(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write(name, text):
    (HERE / name).write_bytes(text.encode("utf-8"))


text_prompt = "Summarize the article.\nQuote: \"café\" \\ tab\there"
write("text_request.json", canonical({
    "model": "llama-3-70b",
    "messages": [{"role": "system", "content": SYSTEM}, {"role": "user", "content": text_prompt}],
    "temperature": 0.0,
}) + "\n")

png = (ROOT / "workflows/rf/fixtures/images/spectrogram_lte.png").read_bytes()
image_prompt = "Classify the signal in the attached spectrogram."
write("image_request.json", canonical({
    "model": "pixtral-vision",
    "messages": [
        {"role": "system", "content": SYSTEM},
        {"role": "user", "content": [
            {"type": "text", "text": image_prompt},
            {"type": "image_url", "image_url": {"url": "data:image/png;base64," + base64.b64encode(png).decode()}},
        ]},
    ],
    "temperature": 0.0,
}) + "\n")

content = "label: LTE\nrationale: 10 ms frames, “dense” resource blocks ≈ \U0001F4E1\n"
response = {
    "id": "chatcmpl-7",
    "object": "chat.completion",
    "created": 1700000000,
    "model": "pixtral-vision",
    "choices": [
        {"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"},
        {"index": 1, "message": {"role": "assistant", "content": "label: WiFi"}, "finish_reason": "stop"},
    ],
    "usage": {"prompt_tokens": 10, "completion_tokens": 9, "total_tokens": 19},
}
write("response.json", json.dumps(response, indent=2, ensure_ascii=True) + "\n")
write("response_content.txt", content)
