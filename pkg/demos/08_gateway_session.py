# The interactive gateway: JSON over HTTP with an NDJSON event stream;
# this script is exactly what a UI client does, over loopback.

import json
import urllib.request

from langarm.gateway import serve

running = serve(port=0, episode_dir="./episodes")
print("gateway at", running.url)


def call(path, body=None, method=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(
        running.url + path, data=data,
        method=method or ("POST" if body is not None else "GET"),
        headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=10) as resp:
        return json.loads(resp.read().decode())


try:
    vocabulary = call("/vocabulary")
    print("vocabulary size:", vocabulary["size"])

    session = call("/sessions", {"task_id": "point", "seed": 4, "mode": "teleop"})
    sid = session["session_id"]
    print("session", sid, "instruction:", session["instruction"])

    for text in ("move left a lot", "move arm forward by 5cm", "lower arm a tiny bit"):
        reply = call(f"/sessions/{sid}/supervision", {"text": text})
        print(f"  {text:<28} -> {reply['primitive_text']} (step {reply['step']})")

    # frames stream in step order over a chunked NDJSON response
    stream = urllib.request.urlopen(
        f"{running.url}/sessions/{sid}/events?from=0&timeout=1", timeout=10)
    frames = [json.loads(line) for line in stream.read().split(b"\n") if line]
    print("stream frames:", [(f["step"], f["primitive_text"]) for f in frames])

    done = call(f"/sessions/{sid}/finish", {}, method="POST")
    print("episode persisted at", done["episode_path"])

    # a policy-mode session scores all 58 primitives per step
    policy = call("/sessions", {"task_id": "point", "seed": 5, "mode": "policy"})
    step = call(f"/sessions/{policy['session_id']}/policy_step", {}, method="POST")
    print(f"policy chose {step['primitive_text']!r} among {len(step['scores'])} scores")
finally:
    running.shutdown()
