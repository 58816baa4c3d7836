"""Drive the HTTP dialogue service end to end with a scripted client.

Spins up the service in a background thread (or targets an already-running
one via --url), opens an eval-mode session, answers the agent's questions
from the target card the way a human evaluator would, and posts feedback.
Only the JSON API is used, so this doubles as a reference client.

Run:  python3 demos/08_live_service_client.py [--agent rule-soft]
      python3 demos/08_live_service_client.py --url http://127.0.0.1:8080
"""

import argparse
import json
import threading
import time
import urllib.error
import urllib.request

import kbdial as kd


def api(base: str, method: str, path: str, payload: dict | None = None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def start_server(kb_ref: str, port: int) -> str:
    import uvicorn
    from kbdial.service import ServiceSettings, create_app

    app = create_app(ServiceSettings(kb=kd.load_kb(kb_ref), seed=7))
    config = uvicorn.Config(app, host="127.0.0.1", port=port,
                            log_level="warning")
    server = uvicorn.Server(config)
    threading.Thread(target=server.run, daemon=True).start()
    base = f"http://127.0.0.1:{port}"
    for _ in range(100):
        try:
            api(base, "GET", "/healthz")
            return base
        except urllib.error.URLError:
            time.sleep(0.05)
    raise RuntimeError("service did not come up")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--url", help="use a running service instead of "
                                  "starting one in-process")
    ap.add_argument("--kb", default="small@1")
    ap.add_argument("--port", type=int, default=8704)
    ap.add_argument("--agent", default="rule-soft")
    args = ap.parse_args()

    base = args.url or start_server(args.kb, args.port)
    print("service:", api(base, "GET", "/healthz"))

    session = api(base, "POST", "/sessions",
                  {"agent": args.agent, "eval_mode": True, "seed": 3})
    sid = session["session_id"]
    card = session["target_card"]
    print(f"\nsession {sid} with {session['agent']}")
    print(f"agent: {session['greeting']}")
    print(f"looking for: {card['entity']}")
    for slot, options in card["slots"].items():
        print(f"  {slot}: one of {options}")

    # Open with one known slot value, then answer whatever the agent asks.
    # A human reading the card sees several candidate values per slot; we
    # mimic that by always answering with the first option listed.
    slots = card["slots"]
    first_slot = next(iter(slots), None)
    if first_slot is None:
        text = "i am looking for a movie"
    else:
        text = f"looking for a movie whose {first_slot} is {slots[first_slot][0]}"

    for _ in range(12):
        print(f"user:  {text}")
        reply = api(base, "POST", f"/sessions/{sid}/utterance", {"text": text})
        print(f"agent: {reply['rendered_text']}")
        if reply["done"]:
            rank = reply.get("target_rank")
            print(f"\nresults: {reply['results']}")
            print("target rank:", rank if rank is not None else "missed")
            api(base, "POST", f"/sessions/{sid}/feedback",
                {"success": rank is not None, "rank": rank,
                 "comment": "scripted walkthrough"})
            break
        asked = reply["agent_act"]["slot"]
        if asked in slots:
            text = f"the {asked} is {slots[asked][0]}"
        else:
            text = "i do not know that one"

    summary = api(base, "GET", f"/sessions/{sid}")
    events = [rec["event"] for rec in summary["transcript"]]
    print(f"\nsession status: {summary['status']}")
    print(f"transcript events: {events}")


if __name__ == "__main__":
    main()
