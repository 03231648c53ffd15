// Route table and guards. An absent session reaches only login/register;
// each role lands on its own dashboard and never renders another role's
// routes.

import type { Role, SessionState } from "./session.js";

export const ROUTE_NAMES = [
  "login",
  "register",
  "dashboard",
  "history",
  "appointments",
  "report",
  "doctor",
  "admin",
] as const;

export type RouteName = (typeof ROUTE_NAMES)[number];

interface RouteDef {
  access: "public" | Role[];
}

export const ROUTES: Record<RouteName, RouteDef> = {
  login: { access: "public" },
  register: { access: "public" },
  // patient views: upload/check, history with date filter, appointments,
  // report download
  dashboard: { access: ["user"] },
  history: { access: ["user"] },
  appointments: { access: ["user"] },
  report: { access: ["user"] },
  // doctor dashboard: appointment table with view/download/cancel
  doctor: { access: ["doctor"] },
  // super-admin oversight: users, pending doctors, activity
  admin: { access: ["superadmin"] },
};

export function canAccess(route: RouteName, session: SessionState | null): boolean {
  const def = ROUTES[route];
  if (def.access === "public") return true;
  if (session === null) return false;
  return def.access.includes(session.role);
}

/** Landing route for a session (or the login view when signed out). */
export function homeRoute(session: SessionState | null): RouteName {
  if (session === null) return "login";
  switch (session.role) {
    case "user":
      return "dashboard";
    case "doctor":
      return "doctor";
    case "superadmin":
      return "admin";
  }
}

/** Resolve a navigation request to the route that actually renders. */
export function guardRoute(route: RouteName, session: SessionState | null): RouteName {
  if (canAccess(route, session)) {
    // signed-in sessions skip the auth forms
    if (session !== null && (route === "login" || route === "register")) {
      return homeRoute(session);
    }
    return route;
  }
  return homeRoute(session);
}
