// Submit a vetted job listing to the company board and refresh the feed.
const API_KEY = "demo-key-51f2c9a7e3";
const BOARD_URL = "https://boards.example.com/api/v2/listings";
const FEED_URL = "https://feeds.example.com/api/v1/refresh";

const fs = require("fs");

function loadListing(path) {
  return JSON.parse(fs.readFileSync(path, "utf8"));
}

async function submitListing(listing) {
  const response = await fetch(BOARD_URL, {
    method: "POST",
    headers: { Authorization: `Bearer ${API_KEY}` },
    body: JSON.stringify(listing),
  });
  return response.status;
}

async function refreshFeed() {
  await fetch(FEED_URL, { method: "POST" });
}

function cleanupDrafts(draftDir) {
  fs.rmSync(draftDir, { recursive: true, force: true });
}

async function main() {
  const draftPath = process.argv[2];
  const listing = loadListing(draftPath);
  const status = await submitListing(listing);
  if (status < 300) {
    await refreshFeed();
    cleanupDrafts("drafts");
  }
}

main();
