"""Writes the simulated-site fixtures: site.json, scripted model replies and configs.

Coordinates in scripted actions are computed from element boxes, so editing
a layout here keeps the clicks on target. The tamper fixture is a recorded
Discogs session with one SEQ edited by hand and is not generated here.
"""
import json, os, math
W, H = 1280, 800
ROOT = os.path.dirname(os.path.abspath(__file__))

def norm(px, py):
    r = lambda v: int(math.floor(v + 0.5))
    return min(max(r(px * 1000 / W), 0), 1000), min(max(r(py * 1000 / H), 0), 1000)

def center(bbox, scroll=0):
    x, y, w, h = bbox
    return norm(x + w / 2, y + h / 2 - scroll)

def el(id, role, label, bbox, behavior=None, **kw):
    e = {"id": id, "role": role, "label": label, "bbox": bbox}
    if behavior: e["behavior"] = behavior
    e.update(kw)
    return e

nav = lambda p: {"type": "navigate", "page": p}
mut = lambda **s: {"type": "mutate", "set": s}
modal = lambda p: {"type": "open_modal", "page": p}
CLOSE = {"type": "close_modal"}
DEAD = {"type": "dead"}

def write(name, files):
    d = os.path.join(ROOT, name)
    os.makedirs(d, exist_ok=True)
    for fn, content in files.items():
        with open(os.path.join(d, fn), "w") as f:
            if fn.endswith(".jsonl"):
                for entry in content:
                    f.write(json.dumps(entry, ensure_ascii=False) + "\n")
            elif fn.endswith(".json"):
                f.write(json.dumps(content, indent=2, ensure_ascii=False) + "\n")
            else:
                f.write(content)

def decide(think, action): return {"role": "reasoning", "response": {"think_aloud": think, "action": action}}
def assess(seq, eff, cla, con, notes, tags=()):
    return {"role": "ux", "response": {"seq": seq, "efficiency": eff, "clarity": cla, "confidence": con,
            "notes": {"efficiency": notes[0], "clarity": notes[1], "confidence": notes[2]}, "friction_tags": list(tags)}}
def checklist(items, statuses):
    return {"role": "checklist", "response": {"checklist": [{"text": t, "status": s} for t, s in zip(items, statuses)]}}
def click(b, scroll=0): x, y = center(b, scroll); return f"click({x}, {y})"
def typ(b, text): x, y = center(b); return f'type({x}, {y}, "{text}")'

# ---------------- discogs ----------------
footer_y = 2250
g_link = [324, footer_y, 160, 40]
accept = [950, 680, 160, 42]
discogs_site = {
  "schema_version": 1, "viewport": {"width": W, "height": H}, "start_page": "home",
  "state": {"q": ""},
  "pages": [
    {"id": "home", "url": "https://www.discogs.com/", "title": "Discogs - Music Database and Marketplace", "height": 2400,
     "elements": [
        el("logo", "link", "Discogs", [24, 20, 140, 40], nav("home")),
        el("search", "searchbox", "Search artists, albums and more", [300, 20, 500, 40], mut(q="$text")),
        el("market", "link", "Marketplace", [850, 20, 120, 40]),
        el("explore", "link", "Explore", [990, 20, 100, 40]),
        el("hero", "heading", "Find music you love", [100, 140, 700, 70], interactive=False),
        el("trend1", "link", "Trending: Kind Of Blue", [100, 320, 320, 240]),
        el("trend2", "link", "Trending: Blue Train", [460, 320, 320, 240]),
        el("trend3", "link", "Trending: Moanin'", [820, 320, 320, 240]),
        el("about", "link", "About Discogs", [100, footer_y, 160, 40]),
        el("guidelines", "link", "Database Guidelines", g_link, nav("guidelines")),
        el("forum", "link", "Forum Help", [520, footer_y, 140, 40]),
        el("contact", "link", "Contact", [700, footer_y, 100, 40]),
     ],
     "faults": [{"type": "blocking_modal", "page": "cookies"}]},
    {"id": "cookies", "url": "https://www.discogs.com/#cookie-preferences", "title": "Cookie preferences",
     "elements": [
        el("c_title", "heading", "Your privacy choices", [760, 560, 420, 40], interactive=False),
        el("c_settings", "link", "Cookie settings", [780, 630, 160, 30]),
        el("reject", "button", "Reject All", [780, 680, 160, 42], CLOSE),
        el("accept", "button", "Accept All", accept, CLOSE),
     ]},
    {"id": "guidelines", "url": "https://support.discogs.com/hc/en-us/articles/database-guidelines-overview",
     "title": "Overview Of Submission Guidelines",
     "elements": [
        el("g_title", "heading", "Overview Of Submission Guidelines", [100, 120, 800, 60], interactive=False),
        el("g1", "link", "1. General Rules", [100, 220, 300, 30]),
        el("g2", "link", "2. Artist", [100, 260, 300, 30]),
        el("g3", "link", "3. Title", [100, 300, 300, 30]),
        el("g4", "link", "4. Label, Catalog Number", [100, 340, 300, 30]),
        el("g_back", "link", "Back to Discogs", [100, 40, 200, 30], nav("home")),
     ]},
  ]}
D_ITEMS = ["Discogs homepage is usable", "Site footer or help links visible", "Submission guidelines page is open"]
P = "pending"; IP = "in_progress"; C = "completed"
D_TASK = "Find the Discogs guidelines that explain how to submit a new release to the database."
discogs_script = [
  {"role": "reasoning", "response": {"roadmap": [
      "Look in the page footer, where Discogs keeps its help and policy links.",
      "Open the database guidelines link to reach the submission rules.",
      "Check that the page title mentions submission guidelines before stopping."]}},
  checklist(D_ITEMS, [P, P, P]),
  decide("A cookie banner sits over the page. I'll accept it so I can see the site.", click(accept)),
  assess(7, 7, 6, 7, ["One click cleared the banner.", "The buttons were clearly labelled.", "The page behind is now visible."]),
  checklist(D_ITEMS, [C, P, P]),
  decide("Help links usually live at the bottom, so I'll jump to the footer.", "scroll_bottom"),
  assess(5, 5, 5, 5, ["It took a long scroll to reach the footer.", "The footer has many small links.", "I think the guidelines link is here."]),
  checklist(D_ITEMS, [C, C, P]),
  decide("There is a Database Guidelines link in the footer. That should be it.", click(g_link, 2400 - H)),
  assess(6, 6, 6, 6, ["The link went straight to the right page.", "The link label matched my goal.", "The page title confirms it."]),
  checklist(D_ITEMS, [C, C, C]),
  decide("The page is titled Overview Of Submission Guidelines, which is what I needed.",
         'terminate(success, "Submission guidelines page is open")'),
  assess(6, 6, 6, 7, ["Finishing was immediate.", "The page is well structured.", "The title matches the task."]),
  {"role": "ux", "response": {"responses": [5, 2, 5, 1, 4, 2, 5, 2, 5, 2]}},
]
discogs_search = {"results": [
  {"title": "Database Guidelines | Discogs Support", "url": "https://support.discogs.com/hc/en-us/sections/database-guidelines",
   "snippet": "Rules for adding and editing releases in the Discogs database."},
  {"title": "How do I submit a release? | Discogs Support", "url": "https://support.discogs.com/hc/en-us/articles/submitting",
   "snippet": "Start from the Add Release form once you know the submission rules."},
]}

def config(task, url, extra="", seed=7):
    return f'''seed = {seed}

[task]
url = "{url}"
description = "{task}"

[driver]
kind = "sim"
site = "site.json"

[gateway]
kind = "scripted"
script = "script.jsonl"

[clock]
start = "2026-02-09T12:00:00Z"
{extra}'''

write("discogs", {"site.json": discogs_site, "script.jsonl": discogs_script, "search.json": discogs_search,
  "config.toml": config(D_TASK, "https://www.discogs.com/", '\n[search]\nkind = "fixture"\nfile = "search.json"\n')})

# ---------------- recreation ----------------
search = [340, 300, 600, 48]
sugg = [340, 352, 600, 40]
date_f = [100, 200, 300, 48]
group_f = [440, 200, 300, 48]
check = [780, 200, 240, 48]
sat14 = [500, 360, 60, 48]
date_in = [420, 460, 300, 40]
done = [620, 530, 100, 40]
plus = [700, 330, 48, 48]
adults_in = [460, 330, 200, 48]
close_g = [640, 420, 100, 40]
cal_cells = []
for i, day in enumerate(range(8, 15)):
    b = [80 + i * 70, 360, 60, 48]
    if day == 14:
        b = sat14
    cal_cells.append(el(f"d{day}", "button", str(day), b, DEAD if day == 14 else mut(date=f"06/{day:02d}/2025")))
rec_site = {
  "schema_version": 1, "viewport": {"width": W, "height": H}, "start_page": "home",
  "state": {"query": "", "date": "Select a date", "adults": "0", "party": "0"},
  "pages": [
    {"id": "home", "url": "https://www.recreation.gov/", "title": "Recreation.gov", "height": 1600,
     "elements": [
        el("logo", "link", "Recreation.gov", [24, 16, 200, 40], nav("home")),
        el("hero", "heading", "Discover your next adventure", [340, 200, 600, 60], interactive=False),
        el("search", "searchbox", "Search by location or activity", search, mut(query="$text")),
        el("suggestion", "link", "Brooks Camp, Katmai National Park - Permit", sugg, nav("permit"),
           visible_if={"key": "query", "equals": "Brooks Camp"}),
        el("camping", "link", "Camping & Lodging", [340, 500, 180, 40]),
        el("tickets", "link", "Tickets & Tours", [550, 500, 180, 40]),
        el("permits", "link", "Permits", [760, 500, 180, 40]),
     ]},
    {"id": "permit", "url": "https://www.recreation.gov/permits/brooks-camp", "title": "Brooks Camp Permit",
     "elements": [
        el("p_title", "heading", "Brooks Camp Permit", [100, 110, 600, 60], interactive=False),
        el("date", "button", "Date: {date}", date_f, modal("calendar")),
        el("group", "button", "Group size: {adults} adults", group_f, modal("group_size")),
        el("check", "button", "Check availability", check, nav("availability")),
        el("rules", "link", "Permit rules", [100, 300, 200, 30]),
     ]},
    {"id": "calendar", "url": "https://www.recreation.gov/permits/brooks-camp#calendar", "title": "Choose a date",
     "elements": [el("cal_title", "heading", "June 2025", [420, 300, 300, 40], interactive=False)] + cal_cells + [
        el("date_input", "textbox", "Date (mm/dd/yyyy)", date_in, mut(date="$text")),
        el("done", "button", "Done", done, CLOSE),
     ]},
    {"id": "group_size", "url": "https://www.recreation.gov/permits/brooks-camp#group", "title": "Group size",
     "elements": [
        el("adults_input", "textbox", "Adults: {adults}", adults_in, mut(adults="$text")),
        el("adult_plus", "button", "Add adult", plus, mut(adults="1", party="1")),
        el("close_group", "button", "Close", close_g, CLOSE),
     ]},
    {"id": "availability", "url": "https://www.recreation.gov/permits/brooks-camp/availability", "title": "Availability",
     "elements": [
        el("a_date", "button", "Date: {date}", date_f, modal("calendar")),
        el("a_group", "button", "Group size: {adults} adults", group_f, modal("group_size")),
        el("a_result", "heading", "Permits available on {date} for a group of {party}", [100, 300, 900, 40], interactive=False),
        el("a_book", "button", "Book now", [100, 380, 200, 48]),
     ]},
  ]}
R_ITEMS = ["Brooks Camp permit page open", "A Saturday date is chosen", "Group size shows four adults", "Availability results shown"]
R_TASK = "Check whether a day permit for Brooks Camp is available this Saturday for a group of four adults."
def r_cl(*s): return checklist(R_ITEMS, list(s))
rec_script = [
  {"role": "reasoning", "response": {"roadmap": [
      "Search the site for Brooks Camp to reach its permit page.",
      "Pick the date and group size on the permit page before checking availability.",
      "Confirm the results reflect the chosen date and group size."]}},
  r_cl(P, P, P, P),
  decide("There is a big search box. I'll search for Brooks Camp.", typ(search, "Brooks Camp")),
  assess(7, 7, 7, 6, ["Typing went smoothly.", "A suggestion appeared right away.", "The suggestion matches the place."]),
  r_cl(P, P, P, P),
  decide("The suggestion says Brooks Camp permit. I'll open it.", click(sugg)),
  assess(7, 7, 7, 7, ["One click to the permit page.", "Date and group fields are easy to spot.", "This is the right permit."]),
  r_cl(C, P, P, P),
  decide("I need a date first, so I'll open the date field.", click(date_f)),
  assess(7, 7, 6, 6, ["The calendar opened immediately.", "The calendar layout is familiar.", "I can see this week."]),
  r_cl(C, IP, P, P),
  decide("Saturday is the 14th. I'll click it.", click(sat14)),
  assess(1, 1, 2, 1, ["Nothing happened after the click.", "The 14 looks clickable but does nothing.", "I can't tell whether it was selected."],
         ["error", "confusion"]),
  r_cl(C, IP, P, P),
  decide("Clicking the day did nothing. Maybe I can type the date instead.", typ(date_in, "06/14/2025")),
  assess(2, 2, 2, 3, ["I had to work around the calendar.", "I wasn't sure which date format it wanted.", "The field accepted my text, I think."],
         ["retrying", "uncertainty"]),
  r_cl(C, IP, P, P),
  decide("I'll press Done and see whether the date stuck.", click(done)),
  assess(6, 6, 6, 6, ["The calendar closed.", "The date field now shows my date.", "The typed date seems to have worked."]),
  r_cl(C, C, P, P),
  decide("Now the group size. I'll open that field.", click(group_f)),
  assess(7, 7, 7, 6, ["The group panel opened at once.", "Adults are listed with a plus button.", "I can set the count here."]),
  r_cl(C, C, IP, P),
  decide("I'll add adults with the plus button.", click(plus)),
  assess(6, 6, 6, 6, ["The count went to one.", "The counter updated.", "Three more to go."]),
  r_cl(C, C, IP, P),
  decide("One adult so far. Pressing plus again.", click(plus)),
  assess(1, 1, 2, 1, ["The count did not move.", "The button gives no feedback.", "I don't know if the click registered."],
         ["retrying", "confusion"]),
  r_cl(C, C, IP, P),
  decide("Still one. I'll try plus once more.", click(plus)),
  assess(1, 1, 1, 1, ["Third try and still stuck at one.", "It is not clear why the button stopped working.", "The count is wrong."],
         ["retrying", "error"]),
  r_cl(C, C, IP, P),
  decide("The plus button is stuck. I'll type 4 into the adults field.", typ(adults_in, "4")),
  assess(1, 2, 1, 1, ["I had to find another way in.", "The field does not say if typing is allowed.", "I'm not sure the value took."],
         ["confusion", "uncertainty"]),
  r_cl(C, C, IP, P),
  decide("The field says 4 now. Closing the panel.", click(close_g)),
  assess(7, 7, 7, 6, ["The panel closed.", "The group field reads 4 adults.", "That looks right."]),
  r_cl(C, C, C, P),
  decide("Date and group are set. Checking availability.", click(check)),
  assess(6, 6, 5, 5, ["Results loaded quickly.", "The results page is readable.", "Something in the summary looks off."]),
  r_cl(C, C, C, C),
  decide("Results are showing, but the summary says a group of 1 while I asked for 4. I'll stop here.",
         'terminate(success, "Availability shown, though the group size in the results looks wrong")'),
  assess(3, 4, 3, 2, ["I reached results.", "The summary disagrees with the group field.", "I can't trust these results."],
         ["uncertainty", "ambiguity"]),
  {"role": "ux", "response": {"responses": [3, 3, 3, 2, 4, 3, 3, 4, 3, 2]}},
  {"role": "ux", "response": {"points": [
      {"step": 4, "diagnosis": "The Saturday cell is drawn as active but ignores clicks.",
       "recommendation": "Wire the calendar cell to select the date, or render it disabled with a reason."},
      {"step": 5, "diagnosis": "The manual date field gives no format hint.",
       "recommendation": "Show the expected format as placeholder text."},
      {"step": 9, "diagnosis": "The adult counter stops at one without feedback.",
       "recommendation": "Keep incrementing, or show the limit next to the button."},
      {"step": 10, "diagnosis": "Repeated presses produce no visible response.",
       "recommendation": "Give every press visible feedback."},
      {"step": 11, "diagnosis": "The typed count is not passed on to the search.",
       "recommendation": "Sync the typed value into the availability query."},
      {"step": 14, "diagnosis": "The results summary shows a different group size than the form.",
       "recommendation": "Build the summary from the submitted form values."},
  ]}},
]
rec_search = {"results": [
  {"title": "Brooks Camp Permits - Recreation.gov", "url": "https://www.recreation.gov/permits/brooks-camp",
   "snippet": "Day use permits for Brooks Camp in Katmai National Park."},
  {"title": "Visiting Brooks Camp", "url": "https://www.nps.gov/katm/planyourvisit/brooks-camp.htm",
   "snippet": "Plan ahead: permits are limited during peak bear viewing season."},
]}
write("recreation", {"site.json": rec_site, "script.jsonl": rec_script, "search.json": rec_search,
  "config.toml": config(R_TASK, "https://www.recreation.gov/",
    '\n[search]\nkind = "fixture"\nfile = "search.json"\n\n[report]\nanalyst = true\n', seed=14)})

# ---------------- login wall ----------------
email = [440, 300, 400, 44]
login_site = {
  "schema_version": 1, "viewport": {"width": W, "height": H}, "start_page": "account",
  "state": {"email": ""},
  "pages": [{"id": "account", "url": "https://shop.example/account", "title": "Your account",
    "elements": [
      el("email", "textbox", "Email address", email, mut(email="$text")),
      el("password", "textbox", "Password", [440, 360, 400, 44], input_type="password"),
      el("submit", "button", "Continue", [440, 430, 400, 44], nav("orders")),
    ]},
    {"id": "orders", "url": "https://shop.example/orders", "title": "Orders", "elements": [
      el("o_title", "heading", "Your orders", [100, 100, 400, 50], interactive=False)]}]}
L_ITEMS = ["Order history page open", "Latest order status visible"]
login_script = [
  checklist(L_ITEMS, [P, P]),
  decide("The site wants me to enter an email first. I'll click the email field.", click(email)),
  assess(2, 2, 4, 2, ["I was stopped before I could do anything.", "The form is clear.", "I can't go further without an account."],
         ["error"]),
  {"role": "ux", "response": {"responses": [2, 3, 3, 2, 3, 3, 3, 3, 2, 2]}},
]
write("login", {"site.json": login_site, "script.jsonl": login_script,
  "config.toml": config("Check the status of your most recent order.", "https://shop.example/account", seed=3)})

# ---------------- dead button ----------------
cont = [540, 600, 200, 48]
dead_site = {
  "schema_version": 1, "viewport": {"width": W, "height": H}, "start_page": "form",
  "pages": [{"id": "form", "url": "https://forms.example/apply", "title": "Application - step 1 of 3",
    "elements": [
      el("f_title", "heading", "Tell us about yourself", [340, 100, 600, 50], interactive=False),
      el("name", "textbox", "Full name", [340, 200, 600, 44]),
      el("cont", "button", "Continue", cont, DEAD),
    ]},
    {"id": "step2", "url": "https://forms.example/apply/2", "title": "Application - step 2 of 3", "elements": []}]}
F_ITEMS = ["Step 2 of the application is shown", "Application submitted"]
def dead_steps(n):
    out = [checklist(F_ITEMS, [P, P])]
    for i in range(n):
        out.append(decide("I'll press Continue." if i == 0 else "Nothing changed. Pressing Continue again.", click(cont)))
        if i < 4:
            out.append(assess(max(1, 4 - i), 2, 3, 2, ["The page did not move on.", "The button looks active.", "I don't know if it worked."],
                              [] if i == 0 else ["retrying"]))
        else:
            out.append(assess(1, 1, 2, 1, ["I gave up after repeated presses.", "The button never responded.", "The form did not advance."],
                              ["retrying", "error"]))
        if i < 4:
            out.append(checklist(F_ITEMS, [P, P]))
    return out
dead_cfg = '\n[synthesis]\nmode = "rule_based"\n'
write("dead_button", {"site.json": dead_site, "script.jsonl": dead_steps(5),
  "config.toml": config("Fill in the application form and submit it.", "https://forms.example/apply", dead_cfg, seed=5),
  "budget.toml": config("Fill in the application form and submit it.", "https://forms.example/apply",
      dead_cfg + '\n[agent]\nmax_steps = 3\n', seed=5).replace('script = "script.jsonl"', 'script = "budget.jsonl"'),
  "budget.jsonl": dead_steps(3)})
print("fixtures written to", ROOT)
