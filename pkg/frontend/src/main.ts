import { ApiClient } from "./api";
import { ChatApp } from "./app";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "";
const root = document.getElementById("app");
if (root) {
  const app = new ChatApp(root, new ApiClient(base));
  void app.boot();
}
